"""``pad`` command line: synthesize, train, score, fuse, evaluate, plot.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.

Every subcommand except ``synth`` accepts ``--config FILE`` holding
``key = value`` lines whose keys are long flag names (``max-passes`` or
``max_passes``); flags given on the command line win over the file. Keys
that belong to other subcommands are ignored, so one run config can serve
a whole recipe. ``synth --config`` takes the corpus generator's own
config format instead.

All randomness derives from ``--seed`` via :func:`swirpad.pipeline.derive_seed`.
Each command holds a lock file in its output directory and appends to
``run.log`` there; no other artifact carries a timestamp.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import pipeline as P
from .cnn import TrainConfig, load_net, save_net
from .data import DEFAULT_CROP, SPLITS, load_manifest
from .det_svg import DetPlotOptions, render_det_svg
from .errors import BadConfig, IoError, NonConvergence, PadError
from .fusion import fuse, optimize_alpha
from .metrics import det_curve, evaluate
from .scores import load_scores, persist_scores
from .svm import load_model, save_model
from .synth import SynthConfig, generate_dataset, load_config

log = logging.getLogger("swirpad")

LOCK_NAME = ".pad.lock"
LOG_NAME = "run.log"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- argument types -------------------------------------------------------------

def _crop(text: str) -> tuple[int, int]:
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"crop must be 'row,col', got {text!r}") from None
    return r, c


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


# -- parser -----------------------------------------------------------------------

def build_parser() -> tuple[_Parser, dict]:
    parser = _Parser(prog="pad", description="SWIR fingerprint presentation attack detection")
    parser.add_argument("--version", action="version", version=f"pad {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subs = {}

    def add(name, help_text, run_config=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        if run_config:
            p.add_argument("--config", type=Path, help="key = value run config (flags win)")
        p.add_argument("--seed", type=int, default=0)
        subs[name] = p
        return p

    p = add("synth", "write a synthetic corpus", run_config=False)
    p.add_argument("--config", type=Path, help="synth config file")
    p.add_argument("--out", type=Path, required=True, help="corpus directory")

    def corpus_args(p):
        p.add_argument("--corpus", type=Path, required=True, help="corpus directory or manifest.csv")
        p.add_argument("--crop", type=_crop, default=DEFAULT_CROP, help="ROI origin 'row,col'")

    def svm_args(p):
        p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
        p.add_argument("--C", type=_positive_float, default=1.0)
        p.add_argument("--gamma", type=_positive_float, default=None, help="rbf width (default 1/dim)")
        p.add_argument("--tol", type=_positive_float, default=1e-3)
        p.add_argument("--max-passes", type=int, default=200)

    p = add("train-svm", "train the spectral-signature pixel SVM")
    corpus_args(p)
    svm_args(p)
    p.add_argument("--pixels-per-class", type=int, default=2000)
    p.add_argument("--out", type=Path, required=True, help="model file")

    p = add("train-cnn", "train the residual CNN")
    corpus_args(p)
    d = TrainConfig()
    p.add_argument("--learning-rate", type=_positive_float, default=d.learning_rate)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--max-epochs", type=int, default=d.max_epochs)
    p.add_argument("--early-stop-patience", type=int, default=d.early_stop_patience)
    p.add_argument("--hflip", action="store_true", help="random horizontal flips during training")
    p.add_argument("--out", type=Path, required=True, help="model file")

    p = add("score", "score one split with a trained system")
    corpus_args(p)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--system", choices=P.SYSTEMS, required=True, help="ss = spectral SVM, res = residual CNN")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="score CSV")

    p = add("features", "train an SVM on CNN features and emit its decisions")
    corpus_args(p)
    svm_args(p)
    p.add_argument("--cnn", type=Path, required=True, help="trained CNN model")
    p.add_argument("--out", type=Path, required=True, help="feature-SVM model file")
    p.add_argument("--split", choices=SPLITS, default=None, help="also classify this split")
    p.add_argument("--scores", type=Path, default=None, help="decision CSV (0 = bona fide, 100 = attack)")

    p = add("fuse", "choose the fusion weight on validation scores and apply it to test scores")
    p.add_argument("--val", type=Path, nargs=2, required=True, metavar=("S1", "S2"))
    p.add_argument("--test", type=Path, nargs=2, required=True, metavar=("T1", "T2"))
    p.add_argument("--grid-step", type=_positive_float, default=0.01)
    p.add_argument("--system-id", default="fused")
    p.add_argument("--out", type=Path, required=True, help="fused test score CSV")
    p.add_argument("--report", type=Path, default=None, help="JSON with alpha and validation D-EER")

    p = add("eval", "evaluation report and DET points for a score CSV")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=50.0)
    p.add_argument("--out", type=Path, default=None, help="report JSON (default: stdout)")
    p.add_argument("--det", type=Path, default=None, help="DET points CSV")

    p = add("plot-det", "DET curves of one or more score CSVs as SVG")
    p.add_argument("--scores", type=Path, nargs="+", required=True)
    p.add_argument("--title", default="DET")
    p.add_argument("--out", type=Path, required=True, help="SVG file")

    return parser, subs


def _read_run_config(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise BadConfig(f"config file not found: {path}") from None
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise BadConfig(f"{path} line {lineno}: expected 'key = value'")
        values[key.replace("_", "-")] = value
    return values


def _option_strings(subs: dict) -> dict:
    """Map 'long-flag-name' -> {command: action} over all subcommands."""
    table: dict = {}
    for cmd, p in subs.items():
        for action in p._actions:
            for opt in action.option_strings:
                if opt.startswith("--"):
                    table.setdefault(opt[2:], {})[cmd] = action
    return table


def parse_args(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        raise UsageError(parser.format_usage().strip())
    if ns.command != "synth" and getattr(ns, "config", None) is not None:
        values = _read_run_config(ns.config)
        table = _option_strings(subs)
        file_args = []
        for key, value in values.items():
            if key in ("config", "help", "version") or key not in table:
                raise BadConfig(f"{ns.config}: unknown key {key!r}")
            action = table[key].get(ns.command)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                if value.lower() in ("1", "true", "yes", "on"):
                    file_args.append(f"--{key}")
                elif value.lower() not in ("0", "false", "no", "off"):
                    raise BadConfig(f"{ns.config}: {key} must be true or false")
            else:
                file_args += [f"--{key}", *value.split()] if action.nargs else [f"--{key}", value]
        # file values first, so flags repeated on the command line override them
        at = argv.index(ns.command)
        ns = parser.parse_args([*argv[:at + 1], *file_args, *argv[at + 1:]])
    return ns


# -- run-time plumbing ----------------------------------------------------------

@contextlib.contextmanager
def output_dir(path: Path):
    """Create ``path``, hold its lock file and log to its run.log."""
    path.mkdir(parents=True, exist_ok=True)
    lock = path / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise IoError(f"{path} is locked by another pad command (remove {lock} if stale)") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    handler = logging.FileHandler(path / LOG_NAME, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    try:
        yield path
    finally:
        log.removeHandler(handler)
        handler.close()
        lock.unlink(missing_ok=True)


def _out_dir(ns) -> Path | None:
    """Directory receiving the command's artifacts (None when it only prints)."""
    if ns.command == "synth":
        return ns.out
    if ns.out is None:
        return None
    return ns.out.parent


def _ensure_parent(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path.parent}: {exc}") from None


def _write_text(path: Path, text: str):
    _ensure_parent(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def _require_converged(model, what):
    if not model.converged:
        raise NonConvergence(f"{what} hit the iteration cap after {model.n_iter} pair updates "
                             "(model written; raise --max-passes or --tol)")


# -- subcommands ------------------------------------------------------------------

def cmd_synth(ns):
    cfg = load_config(ns.config) if ns.config else SynthConfig()
    cfg = dataclasses.replace(cfg, seed=ns.seed)
    man = generate_dataset(cfg, ns.out)
    log.info("synth: wrote %d samples to %s", len(man), ns.out)
    print(json.dumps(man.counts(), sort_keys=True))


def cmd_train_svm(ns):
    man = load_manifest(ns.corpus)
    train = P.load_split(man, "train", ns.crop)
    model = P.train_spectral_svm(train, ns.kernel, ns.C, ns.gamma, ns.tol, ns.max_passes,
                                 ns.pixels_per_class, ns.seed)
    save_model(model, ns.out)
    log.info("train-svm: %d support vectors, converged=%s, wrote %s", model.n_support, model.converged, ns.out)
    _require_converged(model, "spectral SVM")


def cmd_train_cnn(ns):
    man = load_manifest(ns.corpus)
    train = P.load_split(man, "train", ns.crop)
    val = P.load_split(man, "validation", ns.crop)
    cfg = TrainConfig(learning_rate=ns.learning_rate, batch_size=ns.batch_size, max_epochs=ns.max_epochs,
                      early_stop_patience=ns.early_stop_patience, hflip=ns.hflip)
    net, history = P.train_cnn(train, val, cfg, ns.seed)
    save_net(net, ns.out)
    lines = ["epoch,train_loss,val_loss"] + [f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r}" for h in history]
    _write_text(ns.out.with_name(ns.out.name + ".history.csv"), "\n".join(lines) + "\n")
    best = min(history, key=lambda h: h["val_loss"])
    log.info("train-cnn: %d epochs, best epoch %d val_loss %.5f, wrote %s",
             len(history), best["epoch"], best["val_loss"], ns.out)


def cmd_score(ns):
    man = load_manifest(ns.corpus)
    data = P.load_split(man, ns.split, ns.crop)
    if ns.system == "ss":
        scores = P.score_spectral(load_model(ns.model), data)
    else:
        scores = P.score_cnn(load_net(ns.model), data)
    persist_scores(scores, ns.out)
    log.info("score: %s on %s (%d samples) -> %s", ns.system, ns.split, len(scores), ns.out)


def cmd_features(ns):
    man = load_manifest(ns.corpus)
    net = load_net(ns.cnn)
    train = P.load_split(man, "train", ns.crop)
    model = P.train_feature_svm(net, train, ns.kernel, ns.C, ns.gamma, ns.tol, ns.max_passes, ns.seed)
    save_model(model, ns.out)
    log.info("features: feature SVM with %d support vectors -> %s", model.n_support, ns.out)
    if ns.split and ns.scores:
        data = P.load_split(man, ns.split, ns.crop)
        decisions = P.feature_svm_decisions(model, net, data)
        scores = data.score_set("feature-svm", [100.0 * d for d in decisions])
        _ensure_parent(ns.scores)
        persist_scores(scores, ns.scores)
        log.info("features: decisions for %s -> %s", ns.split, ns.scores)
    elif ns.split or ns.scores:
        raise UsageError("pad features: --split and --scores go together")
    _require_converged(model, "feature SVM")


def cmd_fuse(ns):
    v1, v2 = (load_scores(p) for p in ns.val)
    t1, t2 = (load_scores(p) for p in ns.test)
    result = optimize_alpha(v1, v2, ns.grid_step)
    fused = fuse(t1, t2, result.alpha, ns.system_id)
    persist_scores(fused, ns.out)
    report = {"alpha": result.alpha, "grid_step": ns.grid_step, "val_d_eer": result.val_d_eer,
              "systems": [v1.system_id, v2.system_id]}
    if ns.report:
        _write_text(ns.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    log.info("fuse: alpha %.2f (validation D-EER %.4f) -> %s", result.alpha, result.val_d_eer, ns.out)
    print(json.dumps(report, sort_keys=True))


def cmd_eval(ns):
    scores = load_scores(ns.scores)
    report = evaluate(scores, ns.threshold)
    if ns.out:
        _write_text(ns.out, report.to_json())
    else:
        sys.stdout.write(report.to_json())
    if ns.det:
        _write_text(ns.det, det_curve(scores).to_csv())
    log.info("eval: %s D-EER %.4f", scores.system_id, report.d_eer)


def cmd_plot_det(ns):
    curves = [(s.system_id, det_curve(s)) for s in (load_scores(p) for p in ns.scores)]
    _write_text(ns.out, render_det_svg(curves, DetPlotOptions(title=ns.title)))
    log.info("plot-det: %d curves -> %s", len(curves), ns.out)


COMMANDS = {
    "synth": cmd_synth,
    "train-svm": cmd_train_svm,
    "train-cnn": cmd_train_cnn,
    "score": cmd_score,
    "features": cmd_features,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "plot-det": cmd_plot_det,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except PadError as exc:
        print(f"pad: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    log.setLevel(logging.INFO)
    stderr = logging.StreamHandler(sys.stderr)
    stderr.setLevel(logging.INFO if ns.verbose else logging.WARNING)
    stderr.setFormatter(logging.Formatter("pad: %(message)s"))
    log.addHandler(stderr)
    out = _out_dir(ns)
    try:
        with output_dir(out) if out is not None else contextlib.nullcontext():
            log.info("pad %s", " ".join(argv))
            COMMANDS[ns.command](ns)
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"pad: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (PadError, OSError) as exc:
        print(f"pad: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        log.removeHandler(stderr)


if __name__ == "__main__":
    sys.exit(main())
