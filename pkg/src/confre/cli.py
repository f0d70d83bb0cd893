"""Command-line surface for the codec laboratory.

Subcommands cover the whole workflow: three training stages writing a
single weight bundle, stream encode/decode, RD evaluation with optional
rate-delta reports, the decision-parameter sensitivity sweep, and
per-frame trace emission.

Every subcommand accepts ``--config FILE`` holding flat ``key = value``
lines (keys are the long option names; explicit flags win).  The
``CONFRE_SEED`` environment variable supplies the default seed for the
training commands.  Exit codes: 0 success, 2 unusable input, 3 corrupt
bitstream, 4 diverged training.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bitstream import StreamHeader, read_stream, write_stream
from .codec import CodecConfig, nets_from_arrays
from .data import load_frames, save_png_dir, save_raw
from .decision import (
    DecisionParams,
    decode_sequence,
    encode_sequence,
    write_trace_csv,
)
from .errors import (
    BadInputError,
    BitstreamCorruptError,
    TrainingDivergedError,
    WeightFormatError,
)
from .filters import FilterConfig, build_filter, net_from_arrays
from .metrics import RDCurve, bd_rate
from .training import (
    META_KEY,
    ClipDataset,
    TrainConfig,
    config_from_meta,
    config_meta,
    train_baseline,
    train_contextual_filter,
    train_reconstruction_enhancer,
    write_training_log,
)
from .weights_io import read_weight_file, weight_hash, write_weight_file

DEFAULT_SEED = 7
IDENTITY_FILTER_SEED = 0   # fixed so encoder and decoder synthesize equal nets

RD_HEADER = ("sequence", "quality", "rate_bpp", "psnr_db")
SWEEP_HEADER = ("param", "value", "bdrate_pct")

SWEEP_MQC_VALUES = (0, 1, 2, 3, 4)
SWEEP_PF_VALUES = (0.0, 0.08, 0.16, 0.24, 0.32)
SWEEP_ANCHOR = (2, 0.16)


# ---------------------------------------------------------------------------
# config file / seed plumbing


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment; keys may use '-'."""
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise BadInputError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadInputError(
                f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise BadInputError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(action: argparse.Action, raw: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        word = raw.lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise BadInputError(f"expected a boolean for {action.dest!r}, got {raw!r}")
    convert = action.type or str
    try:
        if action.nargs in ("+", "*"):
            return [convert(part) for part in raw.split()]
        return convert(raw)
    except (TypeError, ValueError) as exc:
        raise BadInputError(f"bad value for {action.dest!r}: {raw!r} ({exc})") from exc


def apply_config_file(parser: argparse.ArgumentParser, args: argparse.Namespace):
    """Fill in options the command line left at their defaults."""
    if not getattr(args, "config", None):
        return
    values = read_config_file(args.config)
    actions = {a.dest: a for a in parser._actions}
    for key, raw in values.items():
        if key not in actions or key == "config":
            raise BadInputError(f"unknown config key {key!r} in {args.config}")
        action = actions[key]
        # only apply when the flag was absent from the command line
        if getattr(args, key) == parser.get_default(key):
            setattr(args, key, _coerce(action, raw))


def resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CONFRE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise BadInputError(f"CONFRE_SEED must be an integer, got {env!r}") from exc
    return DEFAULT_SEED


# ---------------------------------------------------------------------------
# weight bundle plumbing


def load_bundle(path) -> tuple[dict, CodecConfig]:
    if not os.path.exists(path):
        raise BadInputError(f"no such weight file: {path}")
    arrays = read_weight_file(path)
    return arrays, config_from_meta(arrays)


def _has_prefix(arrays: dict, prefix: str) -> bool:
    return any(name.startswith(prefix) for name in arrays)


def identity_filter_arrays(config: CodecConfig) -> dict[str, np.ndarray]:
    """Deterministic untrained filters (identity at initialization)."""
    c = config.context_channels
    cf = build_filter(FilterConfig(c, c, 32, 2), seed=IDENTITY_FILTER_SEED)
    re = build_filter(FilterConfig(3, 3, 32, 2), seed=IDENTITY_FILTER_SEED)
    out = dict(cf.named_arrays(prefix="cf."))
    out.update(re.named_arrays(prefix="re."))
    return out


@dataclass(frozen=True)
class Pipeline:
    """One loaded weight bundle, ready to run.

    `weight_hash` covers every array in the effective bundle, independent
    of the disable toggles, so a decoder can verify it loaded the same
    weights the encoder used.
    """

    nets: object
    cf: object | None
    re: object | None
    weight_hash: int

    @property
    def config(self) -> CodecConfig:
        return self.nets.config


def prepare_pipeline(args: argparse.Namespace) -> Pipeline:
    arrays, config = load_bundle(args.weights)
    if args.identity_filters:
        arrays = {k: v for k, v in arrays.items()
                  if not k.startswith(("cf.", "re."))}
        arrays.update(identity_filter_arrays(config))
    nets = nets_from_arrays(arrays, config, prefix="codec.").deployed()
    cf = re = None
    if not args.disable_cf and _has_prefix(arrays, "cf."):
        cf = net_from_arrays(arrays, prefix="cf.").deployed()
        if cf.config.in_channels != config.context_channels:
            raise BadInputError(
                f"context filter expects {cf.config.in_channels} channels, "
                f"codec carries {config.context_channels}"
            )
    if not args.disable_re and _has_prefix(arrays, "re."):
        re = net_from_arrays(arrays, prefix="re.").deployed()
    return Pipeline(nets=nets, cf=cf, re=re, weight_hash=weight_hash(arrays))


def _crop_to_block(frames: np.ndarray, block: int) -> np.ndarray:
    t, c, h, w = frames.shape
    h2, w2 = h - h % block, w - w % block
    if h2 < block or w2 < block:
        raise BadInputError(
            f"frames are {h}x{w}; need at least {block}x{block} after "
            f"cropping to multiples of {block}"
        )
    if (h2, w2) != (h, w):
        print(f"note: cropping {h}x{w} input to {h2}x{w2} "
              f"(multiple of {block})", file=sys.stderr)
    return frames[:, :, :h2, :w2]


def _parse_crp(value: int) -> int | None:
    if value == -1:
        return None
    if value < 1:
        raise BadInputError(f"--crp must be >= 1, or -1 for refresh-once, got {value}")
    return value


def _decision_params(args, total_frames: int) -> DecisionParams:
    return DecisionParams(
        refresh_period=_parse_crp(args.crp),
        max_quality_count=args.mqc,
        progressive_factor=args.pf,
        total_frames=total_frames,
    )


def _parse_qualities(spec: str, config: CodecConfig) -> list[int]:
    try:
        values = [int(part) for part in spec.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise BadInputError(f"bad --qualities list {spec!r}") from exc
    if not values:
        raise BadInputError("--qualities must name at least one ladder index")
    for q in values:
        if not 0 <= q < len(config.quality_steps):
            raise BadInputError(
                f"quality {q} outside the {len(config.quality_steps)}-point ladder"
            )
    return values


# ---------------------------------------------------------------------------
# training subcommands


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        unroll=args.unroll,
        steps=args.steps,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=seed,
    )


def _dataset(args) -> ClipDataset:
    return ClipDataset.synthetic(
        count=args.clips, frames=args.frames,
        height=args.size, width=args.size,
    )


def _progress_printer(every: int):
    if every <= 0:
        return None

    def emit(row):
        if row.step % every == 0:
            print(f"step {row.step:5d}  loss {row.loss:.6f}", flush=True)

    return emit


def cmd_train_baseline(args) -> int:
    seed = resolve_seed(args)
    config = CodecConfig(context_channels=args.context_channels,
                         search_range=args.search_range)
    nets, rows = train_baseline(_dataset(args), _train_config(args, seed),
                                config, progress=_progress_printer(args.log_every))
    arrays = {META_KEY: config_meta(config)}
    arrays.update(nets.named_arrays(prefix="codec."))
    write_weight_file(args.out, arrays)
    if args.log:
        write_training_log(args.log, rows)
    print(f"wrote {args.out} ({len(arrays)} arrays), "
          f"final loss {rows[-1].loss:.6f}")
    return 0


def cmd_train_cf(args) -> int:
    seed = resolve_seed(args)
    arrays, config = load_bundle(args.weights)
    nets = nets_from_arrays(arrays, config, prefix="codec.")
    fcfg = FilterConfig(config.context_channels, config.context_channels,
                        args.filter_width, args.filter_depth)
    cf, rows = train_contextual_filter(nets, _dataset(args),
                                       _train_config(args, seed), fcfg,
                                       progress=_progress_printer(args.log_every))
    arrays = dict(arrays)
    arrays.update(cf.named_arrays(prefix="cf."))
    out = args.out or args.weights
    write_weight_file(out, arrays)
    if args.log:
        write_training_log(args.log, rows)
    print(f"wrote {out} with context-filter arrays, final loss {rows[-1].loss:.6f}")
    return 0


def cmd_train_re(args) -> int:
    seed = resolve_seed(args)
    arrays, config = load_bundle(args.weights)
    nets = nets_from_arrays(arrays, config, prefix="codec.")
    fcfg = FilterConfig(3, 3, args.filter_width, args.filter_depth)
    re, rows = train_reconstruction_enhancer(nets, _dataset(args),
                                             _train_config(args, seed), fcfg,
                                             progress=_progress_printer(args.log_every))
    arrays = dict(arrays)
    arrays.update(re.named_arrays(prefix="re."))
    out = args.out or args.weights
    write_weight_file(out, arrays)
    if args.log:
        write_training_log(args.log, rows)
    print(f"wrote {out} with enhancer arrays, final loss {rows[-1].loss:.6f}")
    return 0


# ---------------------------------------------------------------------------
# coding subcommands


def _encode_clip(pipe: Pipeline, frames: np.ndarray, quality: int,
                 params: DecisionParams):
    result = encode_sequence(frames, pipe.nets, quality, params,
                             cf=pipe.cf, re=pipe.re)
    header = StreamHeader(
        width=frames.shape[3], height=frames.shape[2],
        frame_count=frames.shape[0],
        refresh_period=params.refresh_period,
        quality=quality,
        context_channels=pipe.config.context_channels,
        weight_hash=pipe.weight_hash,
    )
    return header, result


def cmd_encode(args) -> int:
    pipe = prepare_pipeline(args)
    frames = _crop_to_block(load_frames(args.input), pipe.config.block)
    header, result = _encode_clip(pipe, frames, args.quality,
                                  _decision_params(args, frames.shape[0]))
    nbytes = write_stream(args.out, header, result.records)
    if args.trace:
        write_trace_csv(args.trace, result.trace)
    score = result.score
    n_cf = sum(t.use_filtered for t in result.trace)
    n_re = sum(t.use_enhanced for t in result.trace)
    print(f"{args.out}: {header.frame_count} frames, {nbytes} bytes, "
          f"{score.bpp:.4f} bpp, {score.psnr_db:.2f} dB, "
          f"cf on {n_cf}, re on {n_re}")
    return 0


def cmd_decode(args) -> int:
    header, records = read_stream(args.stream)
    pipe = prepare_pipeline(args)
    if header.weight_hash != pipe.weight_hash:
        raise BadInputError(
            f"weight hash mismatch: stream was coded with "
            f"{header.weight_hash:016x}, loaded bundle is {pipe.weight_hash:016x}"
        )
    if header.context_channels != pipe.config.context_channels:
        raise BadInputError(
            f"stream carries {header.context_channels} context channels, "
            f"weights expect {pipe.config.context_channels}"
        )
    decoded = decode_sequence(records, pipe.nets, header.quality,
                              header.refresh_period, header.height,
                              header.width, cf=pipe.cf, re=pipe.re)
    frames = np.stack(decoded.displays).astype(np.float32)
    if args.format == "png":
        save_png_dir(args.out, frames)
    else:
        save_raw(args.out, frames)
    print(f"decoded {header.frame_count} frames "
          f"({header.width}x{header.height}) to {args.out}")
    return 0


def cmd_trace(args) -> int:
    pipe = prepare_pipeline(args)
    frames = _crop_to_block(load_frames(args.input), pipe.config.block)
    header, result = _encode_clip(pipe, frames, args.quality,
                                  _decision_params(args, frames.shape[0]))
    write_trace_csv(args.out, result.trace)
    if args.stream:
        write_stream(args.stream, header, result.records)
    payload_bits = sum(r.rate_bits for r in result.records)
    print(f"{args.out}: {len(result.trace)} rows, "
          f"payload {payload_bits} bits, {result.score.psnr_db:.2f} dB")
    return 0


def _rd_rows_for_clip(pipe: Pipeline, args, name: str, frames: np.ndarray,
                      qualities: list[int]) -> list[tuple]:
    rows = []
    for q in qualities:
        _, result = _encode_clip(pipe, frames, q,
                                 _decision_params(args, frames.shape[0]))
        rows.append((name, q, result.score.bpp, result.score.psnr_db))
    return rows


def _write_rd_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RD_HEADER)
        for name, q, bpp, db in rows:
            writer.writerow([name, q, repr(float(bpp)), repr(float(db))])


def _read_rd_csv(path) -> dict[str, RDCurve]:
    if not os.path.exists(path):
        raise BadInputError(f"no such RD file: {path}")
    by_seq: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RD_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise BadInputError(
                f"{path} lacks columns {sorted(missing)}; expected header "
                f"{','.join(RD_HEADER)}"
            )
        for row in reader:
            by_seq.setdefault(row["sequence"], []).append(
                (float(row["rate_bpp"]), float(row["psnr_db"]))
            )
    curves = {}
    for name, pairs in by_seq.items():
        pairs.sort()
        try:
            curves[name] = RDCurve.from_pairs(pairs)
        except ValueError as exc:
            raise BadInputError(f"{path}: sequence {name!r}: {exc}") from exc
    return curves


def _clip_name(path: str) -> str:
    return Path(path).name


def cmd_evaluate(args) -> int:
    pipe = prepare_pipeline(args)
    qualities = _parse_qualities(args.qualities, pipe.config)
    rows = []
    for path in args.input:
        frames = _crop_to_block(load_frames(path), pipe.config.block)
        rows.extend(_rd_rows_for_clip(pipe, args, _clip_name(path),
                                      frames, qualities))
    _write_rd_csv(args.out, rows)
    print(f"wrote {len(rows)} RD rows to {args.out}")
    if args.anchor:
        deltas = _bd_report(_read_rd_csv(args.anchor), _read_rd_csv(args.out))
        for name, value in deltas:
            print(f"bdrate {name}: {value:+.2f}%")
    return 0


def _bd_report(anchor: dict[str, RDCurve],
               test: dict[str, RDCurve]) -> list[tuple[str, float]]:
    shared = sorted(set(anchor) & set(test))
    if not shared:
        raise BadInputError("anchor and test share no sequence names")
    out = [(name, bd_rate(anchor[name], test[name])) for name in shared]
    out.append(("mean", float(np.mean([v for _, v in out]))))
    return out


def cmd_bdrate(args) -> int:
    deltas = _bd_report(_read_rd_csv(args.anchor), _read_rd_csv(args.test))
    for name, value in deltas:
        print(f"{name}: {value:+.4f}%")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("sequence", "bdrate_pct"))
            for name, value in deltas:
                writer.writerow([name, repr(value)])
    return 0


def sweep_cells() -> list[tuple[str, float, int, float]]:
    """(row label, reported value, mqc, pf) for the full sensitivity grid."""
    cells = [("mqc", float(m), m, SWEEP_ANCHOR[1]) for m in SWEEP_MQC_VALUES]
    cells += [("pf", p, SWEEP_ANCHOR[0], p) for p in SWEEP_PF_VALUES]
    return cells


def cmd_sweep(args) -> int:
    pipe = prepare_pipeline(args)
    qualities = _parse_qualities(args.qualities, pipe.config)
    if len(qualities) < 4:
        raise BadInputError("sweep needs >= 4 rate points for the rate delta")
    clips = [(_clip_name(p), _crop_to_block(load_frames(p), pipe.config.block))
             for p in args.input]

    curve_cache: dict[tuple, dict[str, RDCurve]] = {}

    def curves_for(mqc: int, pf: float) -> dict[str, RDCurve]:
        key = (mqc, repr(pf))
        if key not in curve_cache:
            sub = argparse.Namespace(**vars(args))
            sub.mqc, sub.pf = mqc, pf
            per_clip = {}
            for name, frames in clips:
                pairs = [(r[2], r[3]) for r in
                         _rd_rows_for_clip(pipe, sub, name, frames, qualities)]
                per_clip[name] = RDCurve.from_pairs(sorted(pairs))
            curve_cache[key] = per_clip
        return curve_cache[key]

    anchor = curves_for(*SWEEP_ANCHOR)
    rows = []
    for label, value, mqc, pf in sweep_cells():
        test = curves_for(mqc, pf)
        delta = float(np.mean([bd_rate(anchor[n], test[n]) for n in anchor]))
        rows.append((label, value, delta))
        print(f"{label}={value:g}: {delta:+.4f}%", flush=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for label, value, delta in rows:
            text = str(int(value)) if label == "mqc" else repr(float(value))
            writer.writerow([label, text, repr(delta)])
    print(f"wrote {len(rows)} cells to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_config_flag(sub: argparse.ArgumentParser):
    sub.add_argument("--config", default=None,
                     help="flat key = value file; explicit flags win")


def _add_train_flags(sub: argparse.ArgumentParser, *, unroll: int, steps: int,
                     lr: float):
    sub.add_argument("--steps", type=int, default=steps)
    sub.add_argument("--lr", type=float, default=lr)
    sub.add_argument("--unroll", type=int, default=unroll)
    sub.add_argument("--batch-size", type=int, default=8)
    sub.add_argument("--seed", type=int, default=None,
                     help="default: CONFRE_SEED or %d" % DEFAULT_SEED)
    sub.add_argument("--clips", type=int, default=12,
                     help="synthetic training clips")
    sub.add_argument("--frames", type=int, default=12, help="frames per clip")
    sub.add_argument("--size", type=int, default=32, help="clip height = width")
    sub.add_argument("--log", default=None, help="training log CSV path")
    sub.add_argument("--log-every", type=int, default=0,
                     help="print a progress line every N steps (0 = quiet)")


def _add_pipeline_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--weights", required=True, help="weight bundle path")
    sub.add_argument("--identity-filters", action="store_true",
                     help="replace cf/re with deterministic untrained nets")
    sub.add_argument("--disable-cf", action="store_true",
                     help="never code against filtered context")
    sub.add_argument("--disable-re", action="store_true",
                     help="never enhance the displayed frames")


def _add_decision_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--crp", type=int, default=32,
                     help="context refresh period; -1 = refresh only at t=0")
    sub.add_argument("--mqc", type=int, default=2,
                     help="unconditional filter activations per refresh period")
    sub.add_argument("--pf", type=float, default=0.16,
                     help="progressive rate allowance factor")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="confre",
        description="desk-scale conditional video codec laboratory",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    tb = subs.add_parser("train-baseline", help="stage 1: the codec heads")
    _add_config_flag(tb)
    _add_train_flags(tb, unroll=4, steps=700, lr=1.5e-3)
    tb.add_argument("--context-channels", type=int, default=16)
    tb.add_argument("--search-range", type=int, default=8)
    tb.add_argument("--out", required=True, help="weight bundle to write")
    tb.set_defaults(func=cmd_train_baseline)

    tc = subs.add_parser("train-cf", help="stage 2: the in-loop context filter")
    _add_config_flag(tc)
    _add_train_flags(tc, unroll=6, steps=500, lr=1e-3)
    tc.add_argument("--weights", required=True, help="bundle holding codec arrays")
    tc.add_argument("--out", default=None,
                    help="output bundle (default: rewrite --weights)")
    tc.add_argument("--filter-width", type=int, default=32)
    tc.add_argument("--filter-depth", type=int, default=2)
    tc.set_defaults(func=cmd_train_cf)

    tr = subs.add_parser("train-re", help="stage 3: the display-side enhancer")
    _add_config_flag(tr)
    _add_train_flags(tr, unroll=4, steps=700, lr=1e-3)
    tr.add_argument("--weights", required=True, help="bundle holding codec arrays")
    tr.add_argument("--out", default=None,
                    help="output bundle (default: rewrite --weights)")
    tr.add_argument("--filter-width", type=int, default=32)
    tr.add_argument("--filter-depth", type=int, default=2)
    tr.set_defaults(func=cmd_train_re)

    en = subs.add_parser("encode", help="code a clip into a stream")
    _add_config_flag(en)
    _add_pipeline_flags(en)
    _add_decision_flags(en)
    en.add_argument("--input", required=True, help="PNG directory or raw+sidecar")
    en.add_argument("--out", required=True, help="stream path")
    en.add_argument("--quality", type=int, default=1, help="ladder index")
    en.add_argument("--trace", default=None, help="optional per-frame CSV")
    en.set_defaults(func=cmd_encode)

    de = subs.add_parser("decode", help="decode a stream to frames")
    _add_config_flag(de)
    _add_pipeline_flags(de)
    de.add_argument("--stream", required=True)
    de.add_argument("--out", required=True, help="PNG directory or raw path")
    de.add_argument("--format", choices=("png", "raw"), default="png")
    de.set_defaults(func=cmd_decode)

    ev = subs.add_parser("evaluate", help="RD rows over clips and qualities")
    _add_config_flag(ev)
    _add_pipeline_flags(ev)
    _add_decision_flags(ev)
    ev.add_argument("--input", required=True, nargs="+",
                    help="one or more clips")
    ev.add_argument("--out", required=True, help="RD CSV to write")
    ev.add_argument("--qualities", default="0,1,2,3",
                    help="comma list of ladder indices")
    ev.add_argument("--anchor", default=None,
                    help="RD CSV to report rate deltas against")
    ev.set_defaults(func=cmd_evaluate)

    bd = subs.add_parser("bdrate", help="rate delta between two RD CSVs")
    _add_config_flag(bd)
    bd.add_argument("--anchor", required=True)
    bd.add_argument("--test", required=True)
    bd.add_argument("--out", default=None, help="optional report CSV")
    bd.set_defaults(func=cmd_bdrate)

    sw = subs.add_parser("sweep", help="decision-parameter sensitivity grid")
    _add_config_flag(sw)
    _add_pipeline_flags(sw)
    sw.add_argument("--crp", type=int, default=32)
    sw.add_argument("--input", required=True, nargs="+")
    sw.add_argument("--out", required=True, help="grid CSV to write")
    sw.add_argument("--qualities", default="0,1,2,3")
    sw.set_defaults(func=cmd_sweep)

    tra = subs.add_parser("trace", help="encode and emit the per-frame CSV")
    _add_config_flag(tra)
    _add_pipeline_flags(tra)
    _add_decision_flags(tra)
    tra.add_argument("--input", required=True)
    tra.add_argument("--quality", type=int, default=1)
    tra.add_argument("--out", required=True, help="trace CSV path")
    tra.add_argument("--stream", default=None, help="optionally keep the stream")
    tra.set_defaults(func=cmd_trace)

    return parser, dict(subs.choices)


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config_file(subparsers[args.command], args)
        return args.func(args)
    except (BadInputError, WeightFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BitstreamCorruptError as exc:
        print(f"corrupt stream: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
