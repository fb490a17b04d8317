"""Command line front end.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
A JSON ``--config`` file supplies defaults using the flag names (dashes or
underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bsbl import BsblOptions
from .errors import BsblcsError, ConfigError, DimensionMismatch
from .metrics import QualityReport, erp_average_for, nmse, ssim_1d
from .pipeline import (
    ALGOS,
    PLOT_COLUMNS,
    BenchConfig,
    RecoveryConfig,
    bench,
    compress_dataset,
    packet_dictionary_spec,
    recover_packets,
)
from .sensing import generate_sensing
from .synth import KINDS, make_synthetic
from .telemetry import EpochedDataset, load_dataset, read_stream, write_stream


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _rho(text):
    if isinstance(text, (int, float)):
        return float(text)
    if text == "grid":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--rho takes 'grid' or a number, got {text!r}") from None


def _add_dataset_args(p, name="--dataset", required=True):
    p.add_argument(name, required=required, help="dataset file (.npz, .csv or EEGLAB .set)")
    p.add_argument("--epoch-len", type=int, help="epoch length N for raw CSV/.set input")
    p.add_argument("--channels-as", choices=("rows", "cols"), default="rows")
    p.add_argument("--labels", help="sidecar CSV of epoch_index,label")


def _add_solver_args(p):
    p.add_argument("--max-iters", type=int, default=7)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--learn-b", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--learn-lambda", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--lambda-init", type=float, default=None,
                   help="noise variance (default 1e-10 * ||y||^2 / M)")
    p.add_argument("--block-step", type=int, default=24)
    p.add_argument("--rho", type=_rho, default=None, help="l1 weight, or 'grid' (default)")
    p.add_argument("--l1-max-iters", type=int, default=2000)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="bsblcs", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of default option values")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["synth"] = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=KINDS, default="ar1")
    p.add_argument("--N", type=int, default=384)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3, help="active blocks (blocksparse)")
    p.add_argument("--block", type=int, default=24, help="block length (blocksparse)")
    p.add_argument("--coef", type=float, default=0.95, help="AR(1) coefficient (ar1)")
    p.add_argument("--sample-rate", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = subs["compress"] = sub.add_parser("compress", help="compress a dataset into a packet stream")
    _add_dataset_args(p)
    p.add_argument("--N", type=int, help="expected epoch length; must match the dataset")
    p.add_argument("--M", type=int, default=192)
    p.add_argument("--s", type=int, default=15)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--dict", default="dct", help="identity | dct | wavelet:taps=20:levels=4")
    p.add_argument("--matrix-out", help="also write the sensing matrix as 'M N s seed'")
    p.add_argument("--out", required=True)

    p = subs["recover"] = sub.add_parser("recover", help="recover epochs from a packet stream")
    p.add_argument("--packets", required=True)
    p.add_argument("--algo", choices=("bsbl", "bsbl-no-dict", "l1"), default="bsbl")
    p.add_argument("--dict", default=None, help="override the dictionary named in the packets")
    _add_solver_args(p)
    p.add_argument("--reference", help="original dataset; enables the quality report")
    p.add_argument("--epoch-len", type=int)
    p.add_argument("--channels-as", choices=("rows", "cols"), default="rows")
    p.add_argument("--labels")
    p.add_argument("--report", help="JSON lines report path (default: stdout)")
    p.add_argument("--out", required=True)

    p = subs["bench"] = sub.add_parser("bench", help="sweep algorithms and compression ratios")
    _add_dataset_args(p, required=False)
    p.add_argument("--synth", choices=KINDS, help="benchmark on a synthetic dataset instead")
    p.add_argument("--N", type=int, default=384)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("--M-grid", type=_int_list, default=(192,))
    p.add_argument("--algos", type=_str_list, default=ALGOS)
    p.add_argument("--s", type=int, default=15)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--dict", default="dct")
    p.add_argument("--k", type=int, default=None, help="coefficients kept by topk (default M)")
    p.add_argument("--topk-dict", default=None)
    _add_solver_args(p)
    p.add_argument("--report", help="JSON lines report path (default: stdout)")
    p.add_argument("--plot-data", help="CSV of the same cells for plotting")

    p = subs["metrics"] = sub.add_parser("metrics", help="compare a recovered dataset with the original")
    p.add_argument("--recovered", required=True)
    _add_dataset_args(p, "--reference")
    p.add_argument("--erp", action="store_true", help="compare per-label ERPs instead of epochs")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--report")
    return parser, subs


def _load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def parse_args(argv=None) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser, subs = build_parser()
    if known.config:
        config = _load_config(known.config)
        dests = set().union(*({a.dest for a in sp._actions} for sp in subs.values()))
        unknown = sorted(set(config) - dests)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for sp in subs.values():
            values = {}
            for a in sp._actions:
                if a.dest not in config:
                    continue
                v = config[a.dest]
                values[a.dest] = a.type(v) if a.type is not None and isinstance(v, str) else v
                a.required = False
            sp.set_defaults(**values)
    return parser.parse_args(argv)


def _recovery_config(args, algo: str = "bsbl") -> RecoveryConfig:
    return RecoveryConfig(
        algo=algo,
        bsbl=BsblOptions(
            max_iters=args.max_iters, tol=args.tol, learn_B=args.learn_b,
            learn_lambda=args.learn_lambda, lambda_init=args.lambda_init,
        ),
        block_step=args.block_step,
        rho=args.rho,
        l1_max_iters=args.l1_max_iters,
        dictionary=getattr(args, "dict", None) if args.command == "recover" else None,
    )


def _emit(records, path):
    lines = "".join(json.dumps(r) + "\n" for r in records)
    if path:
        Path(path).write_text(lines)
    else:
        sys.stdout.write(lines)


def cmd_synth(args) -> int:
    params = {"blocksparse": {"k": args.k, "block": args.block}, "ar1": {"coef": args.coef}, "ar2mix": {}}
    ds = make_synthetic(args.kind, args.N, args.epochs, args.seed, args.channels, **params[args.kind])
    ds.sample_rate = args.sample_rate
    ds.save(args.out)
    print(f"wrote {ds.channels} channel(s) x {ds.epochs_per_channel} epoch(s) x {ds.epoch_length} samples to {args.out}")
    return 0


def cmd_compress(args) -> int:
    ds = load_dataset(args.dataset, args.epoch_len, args.channels_as, args.labels)
    N = ds.epoch_length
    if args.N is not None and ds.channels * ds.epochs_per_channel and args.N != N:
        raise DimensionMismatch(f"sensing matrix N={args.N} does not match dataset epoch length N={N}")
    packets = compress_dataset(ds, args.M, args.s, args.seed, args.dict)
    with open(args.out, "wb") as fh:
        count, nbytes = write_stream(fh, packets)
    if args.matrix_out and packets:
        Path(args.matrix_out).write_text(generate_sensing(args.M, N, args.s, args.seed).to_text())
    print(f"wrote {count} packets ({nbytes} bytes) to {args.out}")
    return 0


def cmd_recover(args) -> int:
    packets = read_stream(args.packets)
    reference = None
    if args.reference:
        reference = load_dataset(args.reference, args.epoch_len, args.channels_as, args.labels)
    cfg = _recovery_config(args, args.algo)
    ds, seconds = recover_packets(packets, cfg, reference, args.jobs)
    ds.save(args.out)
    mean_s = float(seconds.mean()) if len(seconds) else 0.0
    print(f"recovered {len(packets)} epochs to {args.out} ({mean_s:.4f} s per epoch)", file=sys.stderr)
    if reference is not None and packets:
        p = packets[0]
        ref = reference.samples[: ds.channels, : ds.epochs_per_channel]
        rep = QualityReport.compare(ds.samples, ref, seconds)
        dict_name = "identity" if args.algo == "bsbl-no-dict" else (args.dict or packet_dictionary_spec(p))
        _emit([rep.record(algo=args.algo, dict=dict_name, M=p.M, N=p.N, seed=p.matrix_seed)], args.report)
    return 0


def cmd_bench(args) -> int:
    if args.synth:
        ds = make_synthetic(args.synth, args.N, args.epochs, args.synth_seed)
    elif args.dataset:
        ds = load_dataset(args.dataset, args.epoch_len, args.channels_as, args.labels)
    else:
        raise ConfigError("bench needs --dataset or --synth")
    cfg = BenchConfig(
        M_grid=tuple(args.M_grid), algos=tuple(args.algos), s=args.s, seed=args.seed,
        dictionary=args.dict, topk_dictionary=args.topk_dict, topk_K=args.k,
        recovery=_recovery_config(args), jobs=args.jobs,
    )
    records = bench(ds, cfg)
    _emit(records, args.report)
    if args.plot_data:
        with open(args.plot_data, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=PLOT_COLUMNS, extrasaction="ignore")
            w.writeheader()
            w.writerows(records)
    return 0


def cmd_metrics(args) -> int:
    rec = EpochedDataset.load(args.recovered)
    ref = load_dataset(args.reference, args.epoch_len, args.channels_as, args.labels)
    if rec.epoch_length != ref.epoch_length:
        raise DimensionMismatch(f"recovered N={rec.epoch_length}, reference N={ref.epoch_length}")
    ref_samples = ref.samples[: rec.channels, : rec.epochs_per_channel]
    if ref_samples.shape != rec.samples.shape:
        raise DimensionMismatch(f"recovered shape {rec.samples.shape} vs reference {ref.samples.shape}")
    if not args.erp:
        rep = QualityReport.compare(rec.samples, ref_samples, window=args.window)
        _emit([rep.record(kind="epoch", N=rec.epoch_length)], args.report)
        return 0
    labels = ref.labels or rec.labels
    if not labels:
        raise ConfigError("--erp needs event labels (--labels sidecar or labels stored in the dataset)")
    labels = labels[: rec.epochs_per_channel]
    wanted = list(dict.fromkeys(labels))
    records = []
    for c in range(rec.channels):
        got = erp_average_for(rec.samples[c], labels, wanted)
        true = erp_average_for(ref_samples[c], labels, wanted)
        for lab in wanted:
            records.append({
                "kind": "erp", "channel": c, "label": lab, "N": rec.epoch_length,
                "nmse": nmse(got[lab], true[lab]),
                "ssim": ssim_1d(got[lab], true[lab], min(args.window, rec.epoch_length)),
            })
    _emit(records, args.report)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "compress": cmd_compress,
    "recover": cmd_recover,
    "bench": cmd_bench,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except BsblcsError as exc:
        print(f"bsblcs: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except BsblcsError as exc:
        print(f"bsblcs: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"bsblcs: error: {exc}", file=sys.stderr)
        return 3
    except np.linalg.LinAlgError as exc:
        print(f"bsblcs: numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
