"""Command-line pipeline: generate, preprocess, train, eval, sweep.

Every subcommand reads one JSON config (``--config``); ``--seed``,
``--threads`` and ``--set key=value`` override single fields. Relative paths
in the config resolve against ``--workdir`` (default: the current directory).

Exit codes: 0 ok, 1 internal error, 2 bad input, 3 telemetry validation
failure, 4 checkpoint/data mismatch.
"""
import argparse
import copy
import hashlib
import json
import logging
from pathlib import Path
import sys

from . import __version__
from .data import (
    concat_runs,
    filter_run,
    load_dataset,
    load_run,
    make_windows,
    save_dataset,
    split_dataset,
    write_run,
)
from .errors import ArtifactMismatchError, DivergenceError, ValidationError, VemoError
from .evaluation import (
    RIDE_BAND_HZ,
    format_report,
    format_sweep,
    noise_sweep,
    one_step_eval,
    report_tables,
    sweep_table,
)
from .nn import VemoArchitecture, load_checkpoint, save_checkpoint
from .signal import ScalingTable
from .synth import SingleTrackParams, add_measurement_noise, build_test_script, build_training_script, simulate
from .train import TrainConfig, fit

log = logging.getLogger("vemo")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_VALIDATION, EXIT_MISMATCH = 0, 1, 2, 3, 4

DEFAULT_CONFIG = {
    "seed": 0,
    "sample_rate_hz": 100.0,
    "cutoff_hz": 5.0,
    "preprocess_cutoffs": [45.0, 25.0, 5.0, 0.5],
    "sweep_cutoffs": [45.0, 25.0, 15.0, 5.0, 1.0],
    "k": 100,
    "split": [0.8, 0.2],
    "scaling": {},
    "arch": VemoArchitecture().to_dict(),
    "train": {k: v for k, v in TrainConfig().to_dict().items() if k != "seed"},
    "synth": {
        "n_train_runs": 2,
        "train_duration_s": 60.0,
        "test_duration_s": 40.0,
        "noise_std": [0.3, 0.3, 1.0, 0.5],
        "vehicle": {},
    },
    "paths": {
        "data": "data",
        "cache": "cache",
        "checkpoint": "model.vemock",
        "reports": "reports",
    },
}


class InputError(VemoError):
    """Bad config, missing file or other operator mistake."""


def _merge(base, over, where="config"):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in out:
            raise InputError(f"unknown {where} field {key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict) and key not in ("scaling", "vehicle"):
            out[key] = _merge(out[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


_OPEN_SECTIONS = (("scaling",), ("synth", "vehicle"))


def _set_dotted(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise InputError(f"--set {dotted}: {key!r} is not a config section")
        node = node[key]
    # only the override tables accept keys that are not in the defaults
    if keys[-1] not in node and tuple(keys[:-1]) not in _OPEN_SECTIONS:
        raise InputError(f"--set {dotted}: unknown field")
    node[keys[-1]] = value


def load_config(path=None, seed=None, overrides=()):
    """Defaults <- config file <- ``--set`` pairs <- ``--seed``; validated."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from None
        cfg = _merge(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        _set_dotted(cfg, key.strip(), _parse_value(val))
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg):
    nyq = cfg["sample_rate_hz"] / 2.0
    cutoffs = [cfg["cutoff_hz"]] + list(cfg["preprocess_cutoffs"]) + list(cfg["sweep_cutoffs"])
    bad = [c for c in cutoffs if not 0 < float(c) < nyq]
    if bad:
        raise InputError(f"cutoffs {bad} Hz outside (0, {nyq}) Hz for {cfg['sample_rate_hz']} Hz sampling")
    if int(cfg["k"]) < 1:
        raise InputError("window length k must be >= 1")
    try:
        TrainConfig.from_dict(dict(cfg["train"], seed=cfg["seed"]))
        VemoArchitecture.from_dict(cfg["arch"])
        ScalingTable.default().with_overrides(**cfg["scaling"])
        SingleTrackParams(**cfg["synth"]["vehicle"])
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"invalid config: {exc}") from None


def config_hash(cfg):
    """sha256 of the config without its path section (outputs do not depend on where they live)."""
    body = {k: v for k, v in cfg.items() if k != "paths"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _cut_label(c):
    return f"{float(c):g}Hz"


class Workspace:
    """Resolved paths for one config."""

    def __init__(self, cfg, workdir):
        root = Path(workdir)
        p = cfg["paths"]
        self.data = root / p["data"]
        self.cache = root / p["cache"]
        self.checkpoint = root / p["checkpoint"]
        self.reports = root / p["reports"]

    def train_runs(self):
        runs = sorted(self.data.glob("train_*.csv"))
        if not runs:
            raise InputError(f"no training runs (train_*.csv) in {self.data}")
        return runs

    @property
    def test_run(self):
        return self.data / "test.csv"

    def cache_file(self, split, cutoff):
        return self.cache / f"{split}_{_cut_label(cutoff)}.vemods"


def _require(path):
    if not Path(path).exists():
        raise InputError(f"missing input {path}")
    return path


def _provenance(cfg, command):
    return {"command": command, "config_hash": config_hash(cfg), "seed": cfg["seed"], "version": __version__}


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _scaling(cfg):
    return ScalingTable.default().with_overrides(**cfg["scaling"])


# ---------------------------------------------------------------------------
# commands

def cmd_generate(cfg, ws, out=None):
    out = out or sys.stdout
    s = cfg["synth"]
    vehicle = SingleTrackParams(**s["vehicle"])
    fs = cfg["sample_rate_hz"]
    seed = int(cfg["seed"])
    ws.data.mkdir(parents=True, exist_ok=True)
    jobs = [(f"train_{i}", build_training_script(1000 * seed + i, s["train_duration_s"]))
            for i in range(int(s["n_train_runs"]))]
    jobs.append(("test", build_test_script(1000 * seed + 999, s["test_duration_s"])))
    manifest = {"runs": [], **_provenance(cfg, "generate")}
    for n, (name, script) in enumerate(jobs):
        clean = simulate(vehicle, script, fs, label=name)
        run = add_measurement_noise(clean, s["noise_std"], 1000 * seed + 500 + n)
        write_run(run, ws.data / f"{name}.csv")
        (ws.data / f"{name}.script.json").write_text(script.to_json() + "\n", encoding="utf-8")
        ranges = {c: [float(run.channel(c).min()), float(run.channel(c).max())]
                  for c in ("a_x", "a_y", "yaw_rate", "v_x")}
        manifest["runs"].append({"name": name, "duration_s": run.duration_s, "samples": len(run),
                                 "ranges": ranges})
        print(f"{name:<8} {run.duration_s:6.1f} s  " + "  ".join(
            f"{c} [{lo:.2f}, {hi:.2f}]" for c, (lo, hi) in ranges.items()), file=out)
    _write_json(ws.data / "manifest.json", manifest)
    return EXIT_OK


def cmd_preprocess(cfg, ws, out=None):
    out = out or sys.stdout
    fs = cfg["sample_rate_hz"]
    train = concat_runs([load_run(p, sample_rate_hz=fs) for p in ws.train_runs()])
    test = load_run(_require(ws.test_run), sample_rate_hz=fs)
    scaling = _scaling(cfg)
    k = int(cfg["k"])
    ws.cache.mkdir(parents=True, exist_ok=True)
    for c in cfg["preprocess_cutoffs"]:
        for split, run in (("train", train), ("test", test)):
            ds = make_windows(filter_run(run, c), k, scaling)
            path = ws.cache_file(split, c)
            save_dataset(ds, path)
            print(f"{path.name}: {len(ds)} windows of {k} samples", file=out)
    return EXIT_OK


def _arch_diff(cfg, params):
    want = VemoArchitecture.from_dict(cfg["arch"]).to_dict()
    have = params.arch.to_dict()
    return {f"arch.{key}": (have[key], want[key]) for key in want if want[key] != have[key]}


def _check_checkpoint(cfg, params):
    diff = _arch_diff(cfg, params)
    meta = params.meta
    if "k" in meta and int(meta["k"]) != int(cfg["k"]):
        diff["k"] = (meta["k"], cfg["k"])
    if "cutoff_hz" in meta and float(meta["cutoff_hz"]) != float(cfg["cutoff_hz"]):
        diff["cutoff_hz"] = (meta["cutoff_hz"], cfg["cutoff_hz"])
    if diff:
        lines = "; ".join(f"{k}: checkpoint={a} config={b}" for k, (a, b) in diff.items())
        raise ArtifactMismatchError(f"checkpoint does not match config: {lines}", diff)


def cmd_train(cfg, ws, out=None):
    out = out or sys.stdout
    ds = load_dataset(_require(ws.cache_file("train", cfg["cutoff_hz"])))
    if ds.k != int(cfg["k"]) or ds.scaling != _scaling(cfg):
        raise ArtifactMismatchError(
            "training cache was built with a different window length or scaling; rerun preprocess",
            {"k": (ds.k, cfg["k"])},
        )
    train, val = split_dataset(ds, cfg["split"])
    tcfg = TrainConfig.from_dict(dict(cfg["train"], seed=cfg["seed"]))
    arch = VemoArchitecture.from_dict(cfg["arch"])

    def report(rec):
        print(f"epoch {rec.epoch:4d}  train MAE {rec.train_mae:.6f}  val MAE {rec.val_mae:.6f}", file=out)

    try:
        params, tlog = fit(train, val, tcfg, arch=arch, callback=report)
    except DivergenceError as exc:
        ws.checkpoint.parent.mkdir(parents=True, exist_ok=True)
        ws.checkpoint.with_suffix(".log.csv").write_text(exc.log.to_csv(), encoding="utf-8")
        raise
    params.meta = {
        "k": ds.k,
        "scaling": ds.scaling.to_dict(),
        "cutoff_hz": float(cfg["cutoff_hz"]),
        "best_epoch": tlog.best_epoch,
        "train_windows": len(train),
        "val_windows": len(val),
        **_provenance(cfg, "train"),
    }
    ws.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, ws.checkpoint)
    ws.checkpoint.with_suffix(".log.csv").write_text(tlog.to_csv(), encoding="utf-8")
    print(f"best epoch {tlog.best_epoch} (val MAE {min(tlog.val_mae):.6f}) -> {ws.checkpoint}", file=out)
    return EXIT_OK


def _stamp(cfg, command):
    p = _provenance(cfg, command)
    return f"# config_hash {p['config_hash']}  seed {p['seed']}  vemo {p['version']}\n"


def write_report(report, dest, cfg, title, band):
    from . import plots

    dest.mkdir(parents=True, exist_ok=True)
    (dest / "summary.txt").write_text(_stamp(cfg, "eval") + format_report(report, title), encoding="utf-8")
    for stem, text in report_tables(report).items():
        (dest / f"{stem}.csv").write_text(text, encoding="utf-8")
    plots.psd_figure(report, dest / "psd.svg", band)
    plots.histogram_figure(report, dest / "histogram.svg")
    plots.relative_error_figure(report, dest / "relative_error.svg")
    _write_json(dest / "provenance.json", _provenance(cfg, "eval"))


def cmd_eval(cfg, ws, out=None):
    out = out or sys.stdout
    params = load_checkpoint(_require(ws.checkpoint))
    _check_checkpoint(cfg, params)
    test = load_dataset(_require(ws.cache_file("test", cfg["cutoff_hz"])))
    report = one_step_eval(params, test, _scaling(cfg), cfg["sample_rate_hz"])
    c = float(cfg["cutoff_hz"])
    band = (RIDE_BAND_HZ[0], min(RIDE_BAND_HZ[1], c)) if c > RIDE_BAND_HZ[0] else None
    title = f"Error metrics for predicted signals (trained and tested at {c:g} Hz)"
    write_report(report, ws.reports / "eval", cfg, title, band)
    out.write(format_report(report, title))
    return EXIT_OK


def cmd_sweep(cfg, ws, out=None):
    out = out or sys.stdout
    from . import plots

    params = load_checkpoint(_require(ws.checkpoint))
    _check_checkpoint(cfg, params)
    raw = load_run(_require(ws.test_run), sample_rate_hz=cfg["sample_rate_hz"])
    c = float(cfg["cutoff_hz"])
    inputs = [x for x in cfg["sweep_cutoffs"] if float(x) >= c]
    sweep = noise_sweep(params, raw, inputs, c, _scaling(cfg), int(cfg["k"]))
    dest = ws.reports / "sweep"
    dest.mkdir(parents=True, exist_ok=True)
    text = format_sweep(sweep)
    (dest / "sweep.txt").write_text(_stamp(cfg, "sweep") + text, encoding="utf-8")
    (dest / "sweep.csv").write_text(sweep_table(sweep), encoding="utf-8")
    plots.sweep_figure(sweep, dest / "sweep.svg")
    _write_json(dest / "provenance.json", _provenance(cfg, "sweep"))
    out.write(text)
    return EXIT_OK


COMMANDS = {
    "generate": (cmd_generate, "simulate training and test telemetry"),
    "preprocess": (cmd_preprocess, "filter, scale and window telemetry into dataset caches"),
    "train": (cmd_train, "fit the network on the training-cutoff cache"),
    "eval": (cmd_eval, "one-step evaluation on the held-out test run"),
    "sweep": (cmd_sweep, "evaluate with inputs filtered at higher cutoffs"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="vemo", description="Vehicle-dynamics GRU pipeline.")
    parser.add_argument("--version", action="version", version=f"vemo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
        p.add_argument("--workdir", default=".", help="root for relative paths in the config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field, e.g. train.epochs=20")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _exit_code(exc):
    if isinstance(exc, ArtifactMismatchError):
        return EXIT_MISMATCH
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (InputError, OSError, ValueError)) or (
        isinstance(exc, VemoError) and not isinstance(exc, (DivergenceError, FloatingPointError))
    ):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.overrides)
        ws = Workspace(cfg, args.workdir)
        fn = COMMANDS[args.command][0]
        if args.threads is not None:
            if args.threads < 1:
                raise InputError("--threads must be >= 1")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return fn(cfg, ws)
        return fn(cfg, ws)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        if code == EXIT_INTERNAL:
            log.exception("internal error")
        print(f"vemo {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
