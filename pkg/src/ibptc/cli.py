"""Command-line front end: ``ibptc {ber,exit,evolve,cov,interleaver,replay}``.

Each experiment writes a CSV file and, next to it, ``<file>.manifest.json``
holding every resolved option, the master seed, the tool version and
timestamps.  ``ibptc replay <manifest>`` re-runs it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    StopRule,
    exit_chart,
    extrinsic_covariance,
    resolve_workers,
    run_ber,
    snr_evolution,
)
from .interleave import (
    IbpConfig,
    Permutation,
    PermutationFileError,
    block_displacements,
    compose_stream,
    default_spread,
    make_srandom,
    parse_permutation_text,
    read_permutation,
    spread_violations,
    write_permutation,
)
from .turbo import RATES, VARIANTS, TurboConfig, build_intra

EXPERIMENTS = ("ber", "exit", "evolve", "cov")


class ConfigError(Exception):
    """Invalid option value; reported as one line naming the flag, exit code 2."""


def parse_grid(text: str, flag: str = "--ebn0") -> list[float]:
    """``start:step:stop`` (inclusive when stop lands on the grid), a comma list, or one value."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, step, stop = parts
            if step <= 0 or stop < start:
                raise ConfigError(f"{flag}: need step > 0 and stop >= start in {text!r}")
            n = int(math.floor((stop - start) / step + 1e-9))
            return [round(start + k * step, 10) for k in range(n + 1)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: cannot parse grid {text!r}") from None


# -- argument parsing ----------------------------------------------------------


def _code_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("code")
    g.add_argument("--block-len", type=int, required=True, help="intra-block length L")
    g.add_argument("--span", type=int, default=0, help="IBP span S (0 = classic turbo code)")
    g.add_argument("--period", type=int, default=None, help="IBP period T_s (default 2S+1)")
    g.add_argument("--step", type=int, default=1, help="IBP step, coprime to 2S+1")
    g.add_argument("--boundary", choices=("wrap", "clamp"), default="wrap")
    g.add_argument("--stream-blocks", type=int, default=None,
                   help="blocks per simulated stream B (default: max(2S+1, 50))")
    g.add_argument("--intra", choices=("srandom", "msrandom", "rectangular", "identity", "file"),
                   default="srandom")
    g.add_argument("--spread", type=int, default=None, help="s-random spread (default floor(sqrt(L/2)))")
    g.add_argument("--intra-seed", type=int, default=0)
    g.add_argument("--rows", type=int, default=None, help="rows of the rectangular interleaver")
    g.add_argument("--intra-file", default=None, help="intra-block permutation file")
    g.add_argument("--rate", choices=RATES, default="1/3")
    g.add_argument("--variant", choices=VARIANTS, default="TP")
    g.add_argument("--iters", type=int, default=10)
    g.add_argument("--algo", choices=("logmap", "maxlogmap"), default="logmap")
    g.add_argument("--window", type=int, default=None, help="sliding-window length W")
    g.add_argument("--warmup", type=int, default=None, help="sliding-window warm-up W0")
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--out", default=None, help="CSV path (manifest goes to <out>.manifest.json)")
    p.add_argument("--timing", choices=("none", "wall"), default="none",
                   help="'wall' writes measured seconds into the CSV (breaks byte-identical replays)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibptc", description="Inter-block permutation turbo code lab")
    parser.add_argument("--version", action="version", version=f"ibptc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ber", help="BER/FER sweep")
    _code_options(p)
    p.add_argument("--ebn0", required=True, help="Eb/N0 grid in dB, start:step:stop")
    p.add_argument("--blocks", type=int, default=1000, help="max blocks per grid point")
    p.add_argument("--min-errors", type=int, default=100, help="stop a point after this many bit errors")

    p = sub.add_parser("exit", help="EXIT chart of both constituents")
    _code_options(p)
    p.add_argument("--snr", type=float, required=True, help="channel Eb/N0 in dB")
    p.add_argument("--ia", default="0.0:0.1:0.9", help="a-priori mutual information grid")
    p.add_argument("--samples", type=int, default=100_000, help="bits per chart point")

    for name, text in (("evolve", "extrinsic SNR evolution"), ("cov", "a-priori/extrinsic correlation")):
        p = sub.add_parser(name, help=text)
        _code_options(p)
        p.add_argument("--ebn0", type=float, required=True)
        p.add_argument("--trials", type=int, default=10, help="streams pooled per iteration")
        p.add_argument("--constituent", choices=("1", "2", "both"), default="2")

    p = sub.add_parser("interleaver", help="generate / validate / compose permutations")
    isub = p.add_subparsers(dest="action", required=True)
    g = isub.add_parser("generate", help="write an s-random permutation")
    g.add_argument("--length", type=int, required=True)
    g.add_argument("--spread", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)
    v = isub.add_parser("validate", help="check bijectivity, spread and span of a file")
    v.add_argument("file")
    v.add_argument("--spread", type=int, default=None)
    v.add_argument("--block-len", type=int, default=None)
    v.add_argument("--span", type=int, default=None)
    v.add_argument("--boundary", choices=("wrap", "clamp"), default="wrap")
    c = isub.add_parser("compose", help="export the composite stream permutation")
    c.add_argument("--block-len", type=int, required=True)
    c.add_argument("--span", type=int, default=0)
    c.add_argument("--blocks", type=int, required=True, help="number of blocks B")
    c.add_argument("--period", type=int, default=None)
    c.add_argument("--step", type=int, default=1)
    c.add_argument("--boundary", choices=("wrap", "clamp"), default="wrap")
    c.add_argument("--intra", choices=("srandom", "msrandom", "identity", "file"), default="srandom")
    c.add_argument("--intra-file", default=None)
    c.add_argument("--spread", type=int, default=None)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)

    p = sub.add_parser("replay", help="re-run an experiment from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="CSV path (default: the manifest's)")
    return parser


# -- config resolution ---------------------------------------------------------


def _check_positive(args, *flags):
    for flag in flags:
        v = getattr(args, flag.lstrip("-").replace("-", "_"))
        if v is not None and v < 1:
            raise ConfigError(f"{flag} must be >= 1, got {v}")


def resolve_config(args) -> TurboConfig:
    _check_positive(args, "--block-len", "--iters", "--stream-blocks", "--period", "--spread", "--window")
    if args.span < 0:
        raise ConfigError(f"--span must be >= 0, got {args.span}")
    if args.warmup is not None and args.warmup < 0:
        raise ConfigError(f"--warmup must be >= 0, got {args.warmup}")
    if args.warmup is not None and args.window is None:
        raise ConfigError("--warmup needs --window")
    if args.window is not None and args.warmup is not None and args.warmup > args.window:
        raise ConfigError("--warmup must not exceed --window")
    if args.intra == "file" and not args.intra_file:
        raise ConfigError("--intra file needs --intra-file")
    if args.intra == "rectangular" and (not args.rows or args.block_len % args.rows):
        raise ConfigError(f"--rows must divide --block-len {args.block_len}")
    if args.spread is not None and args.spread > args.block_len / 2:
        raise ConfigError(f"--spread {args.spread} exceeds --block-len/2")
    if args.variant == "TB" and args.block_len % 7 == 0:
        raise ConfigError("--variant TB needs --block-len not a multiple of the encoder period 7")
    blocks = args.stream_blocks or max(2 * args.span + 1, 50)
    cfg = TurboConfig.make(
        args.block_len, args.span, blocks,
        period=args.period, step=args.step, boundary_mode=args.boundary,
        intra="file" if args.intra_file and args.intra == "srandom" else args.intra,
        spread=args.spread, intra_seed=args.intra_seed, rows=args.rows, path=args.intra_file,
        rate=args.rate, variant=args.variant, iterations=args.iters, algorithm=args.algo,
        window=args.window, warmup=args.warmup,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"--span/--period/--step/--stream-blocks: {exc}") from None
    return cfg


# -- output --------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def render_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _emit(args, text: str, manifest: dict) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.write_text(text, encoding="ascii")
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _manifest(args, cfg, started: float, extra=None) -> dict:
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    m = {
        "tool": "ibptc",
        "version": __version__,
        "command": args.command,
        "options": opts,
        "config": dataclasses.asdict(cfg) if cfg is not None else None,
        "seed": getattr(args, "seed", None),
        "workers": resolve_workers(),
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        m.update(extra)
    return m


def cmd_ber(args) -> int:
    cfg = resolve_config(args)
    grid = parse_grid(args.ebn0)
    _check_positive(args, "--blocks")
    if args.min_errors < 0:
        raise ConfigError("--min-errors must be >= 0")
    started = time.time()

    def progress(_, r):
        if args.verbose:
            print(f"Eb/N0 {r.ebn0_db:5.2f} dB  BER {r.ber:.3e}  ({r.bit_errors}/{r.bits_simulated})",
                  file=sys.stderr)

    results = run_ber(cfg, grid, StopRule(args.blocks, args.min_errors), args.seed, progress=progress)
    wall = args.timing == "wall"
    rows = [
        (r.ebn0_db, r.bits_simulated, r.bit_errors, r.ber, r.frames, r.frame_errors, r.fer,
         r.mean_iterations, r.wall_seconds if wall else 0.0)
        for r in results
    ]
    header = ("ebn0_db", "bits", "bit_errors", "ber", "frames", "frame_errors", "fer", "mean_iters", "seconds")
    extra = {"wall_seconds": [r.wall_seconds for r in results],
             "under_sampled": [r.ebn0_db for r in results if r.under_sampled]}
    _emit(args, render_csv(header, rows), _manifest(args, cfg, started, extra))
    return 0


def cmd_exit(args) -> int:
    cfg = resolve_config(args)
    grid = parse_grid(args.ia, "--ia")
    if any(not 0 <= v < 1 for v in grid):
        raise ConfigError("--ia values must lie in [0, 1)")
    _check_positive(args, "--samples")
    started = time.time()
    pts = exit_chart(cfg, args.snr, grid, args.samples, args.seed)
    rows = [(p.ia, p.ie, p.snr_db, p.constituent) for p in pts]
    _emit(args, render_csv(("ia", "ie", "snr_db", "constituent"), rows), _manifest(args, cfg, started))
    return 0


def _trace_cmd(args, fn, field_name: str) -> int:
    cfg = resolve_config(args)
    _check_positive(args, "--trials")
    started = time.time()
    trace = fn(cfg, args.ebn0, args.trials, args.seed)
    values = getattr(trace, field_name)
    cols = (0, 1) if args.constituent == "both" else (int(args.constituent) - 1,)
    rows = [(it + 1, values[it, c], c + 1) for c in cols for it in range(trace.iterations)]
    _emit(args, render_csv(("iteration", "value", "constituent"), rows), _manifest(args, cfg, started))
    return 0


def cmd_evolve(args) -> int:
    return _trace_cmd(args, snr_evolution, "snr")


def cmd_cov(args) -> int:
    return _trace_cmd(args, extrinsic_covariance, "correlation")


def cmd_interleaver(args) -> int:
    if args.action == "generate":
        if args.length < 1:
            raise ConfigError("--length must be >= 1")
        s = args.spread or default_spread(args.length)
        if s > args.length / 2:
            raise ConfigError(f"--spread {s} exceeds --length/2")
        perm = make_srandom(args.length, s, args.seed)
        _write_perm(args.out, perm)
        return 0
    if args.action == "validate":
        return _validate(args)
    if args.span < 0:
        raise ConfigError("--span must be >= 0")
    ibp = IbpConfig(args.block_len, args.span, args.blocks, args.period, args.step, args.boundary)
    try:
        ibp.validate()
    except ValueError as exc:
        raise ConfigError(f"--block-len/--span/--blocks: {exc}") from None
    intra_kind = "file" if args.intra_file else args.intra
    cfg = TurboConfig.make(
        args.block_len, args.span, args.blocks, period=args.period, step=args.step,
        boundary_mode=args.boundary, intra=intra_kind, spread=args.spread, intra_seed=args.seed,
        path=args.intra_file,
    )
    try:
        intra = build_intra(cfg)
    except PermutationFileError as exc:
        print(f"ibptc: error: {args.intra_file}: {exc}", file=sys.stderr)
        return 2
    sp = compose_stream(intra, ibp)
    _write_perm(args.out, sp.perm)
    print(f"srid_bits={sp.srid_bits} avg_latency_bits={sp.avg_latency_bits} repairs={sp.repairs}",
          file=sys.stderr)
    return 0


def _write_perm(out, perm: Permutation) -> None:
    if out is None:
        sys.stdout.write(f"{len(perm)}\n" + "".join(f"{i} {v}\n" for i, v in enumerate(perm.map.tolist())))
    else:
        write_permutation(out, perm)


def _validate(args) -> int:
    try:
        raw = parse_permutation_text(Path(args.file).read_text(encoding="ascii"))
    except PermutationFileError as exc:
        print(f"ibptc: error: {args.file}: {exc}", file=sys.stderr)
        return 2
    except (OSError, UnicodeDecodeError) as exc:
        print(f"ibptc: error: {args.file}: {exc}", file=sys.stderr)
        return 2
    ok = True
    first = {}
    dup = None
    for k, v in enumerate(raw.tolist()):
        if v in first:
            dup = (k + 2, v, first[v] + 2)
            break
        first[v] = k
    if dup:
        print(f"bijective: FAIL (line {dup[0]}: value {dup[1]} already used on line {dup[2]})")
        return 1
    print(f"bijective: PASS (N={raw.size})")
    if args.spread:
        bad = spread_violations(raw, args.spread, limit=1)
        if bad:
            i, j = bad[0]
            print(f"spread {args.spread}: FAIL (lines {i + 2} and {j + 2})")
            ok = False
        else:
            print(f"spread {args.spread}: PASS")
    if args.block_len and args.span is not None:
        if raw.size % args.block_len:
            print(f"span {args.span}: FAIL (N={raw.size} not a multiple of L={args.block_len})")
            ok = False
        else:
            d = block_displacements(raw, args.block_len, raw.size // args.block_len, args.boundary)
            worst = int(np.abs(d).max())
            if worst > args.span:
                line = int(np.argmax(np.abs(d))) + 2
                print(f"span {args.span}: FAIL (line {line}: displacement {worst})")
                ok = False
            else:
                print(f"span {args.span}: PASS (max displacement {worst})")
    return 0 if ok else 1


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"manifest: {exc}") from None
    if manifest.get("tool") != "ibptc" or manifest.get("command") not in EXPERIMENTS:
        raise ConfigError("manifest: not an ibptc experiment manifest")
    opts = dict(manifest["options"])
    if args.out is not None:
        opts["out"] = args.out
    ns = argparse.Namespace(**opts, verbose=False)
    return COMMANDS[manifest["command"]](ns)


COMMANDS = {
    "ber": cmd_ber,
    "exit": cmd_exit,
    "evolve": cmd_evolve,
    "cov": cmd_cov,
    "interleaver": cmd_interleaver,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ibptc: error: {exc}", file=sys.stderr)
        return 2
    except PermutationFileError as exc:
        print(f"ibptc: error: --intra-file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
