"""Command-line front end.

One executable with eight subcommands covering the pipeline end to
end: feature extraction, dependence scoring, model training and
prediction, cross-validated evaluation, the window sweep, and the
synthetic session generator. Every run writes a manifest (config echo,
seed, library versions) next to its outputs so a result can be
reproduced bit for bit from the manifest alone. Exit codes: 0 success,
2 input validation, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .dataset import (
    Session,
    State,
    load_feature_series,
    load_session,
    parse_state,
    parse_synth_manifest,
    synth_session,
    write_annotation_trace,
    write_feature_series,
    write_session,
)
from .errors import ConvergenceError, InputError, NumericError, PipelineError
from .evaluation import DEFAULT_SWEEP, ablate_regions, kfold_cv, window_sweep
from .facefeat import extract_series, load_landmarks, load_reference_shape
from .regions import ForestParams
from .regress import (
    StateModelConfig,
    SvrParams,
    load_model,
    predict_state,
    train_state_model,
    train_ungated_model,
    training_weights,
)
from .stats import MicMatrix, MicParams, mic, pearson
from .temporal import DEFAULT_DEADBAND

#: Environment variable consulted for the default output directory.
OUT_ENV = "EPISTATE_OUT"

# Config-file keys and the type each parses to. Flags use the same
# names with dashes; anything else in a config file is rejected.
_CONFIG_KEYS = {
    "window": int,
    "deadband": float,
    "tau": float,
    "smooth": int,
    "alpha": float,
    "clumps": int,
    "mic_points": int,
    "trees": int,
    "depth": int,
    "min_leaf": int,
    "mtry": int,
    "bootstrap": int,
    "svr_c": float,
    "epsilon": float,
    "kernel": str,
    "gamma": float,
    "tol": float,
    "max_iter": int,
    "k": int,
    "seed": int,
    "state": str,
    "fps": float,
    "windows": str,
}


@dataclass
class RunConfig:
    """Resolved settings for one CLI run: file values overridden by flags."""

    subcommand: str
    out: str
    seed: int = 0
    jobs: int = 1
    strict: bool = False
    fps: float = 25.0
    state: str = ""
    k: int = 10
    windows: tuple = DEFAULT_SWEEP
    values: dict = field(default_factory=dict)

    def model_config(self) -> StateModelConfig:
        v = self.values
        kw = {}
        if "window" in v:
            kw["window"] = v["window"]
        kw["deadband"] = v.get("deadband", DEFAULT_DEADBAND)
        if "tau" in v:
            kw["tau"] = v["tau"]
        if "smooth" in v:
            kw["smooth"] = v["smooth"]
        if "mic_points" in v:
            kw["mic_max_points"] = v["mic_points"]
        kw["mic"] = MicParams(alpha=v.get("alpha", MicParams().alpha),
                              c=v.get("clumps", MicParams().c))
        fp = ForestParams()
        kw["forest"] = ForestParams(
            n_trees=v.get("trees", fp.n_trees),
            max_depth=v.get("depth", fp.max_depth),
            min_leaf=v.get("min_leaf", fp.min_leaf),
            features_per_split=v.get("mtry", fp.features_per_split),
            bootstrap=bool(v.get("bootstrap", fp.bootstrap)),
            seed=self.seed)
        sp = SvrParams()
        kw["svr"] = SvrParams(
            C=v.get("svr_c", sp.C),
            epsilon=v.get("epsilon", sp.epsilon),
            kernel=v.get("kernel", sp.kernel),
            gamma=v.get("gamma", sp.gamma),
            tol=v.get("tol", sp.tol),
            max_iter=v.get("max_iter", sp.max_iter))
        return StateModelConfig(**kw)

    def echo_pairs(self) -> list:
        pairs = [("command", self.subcommand), ("seed", str(self.seed))]
        for key in sorted(self.values):
            if key in ("seed", "state"):
                continue
            val = self.values[key]
            pairs.append((key, repr(val) if isinstance(val, float) else str(val)))
        if self.state:
            pairs.append(("state", self.state))
        return pairs


def _parse_config_file(path) -> dict:
    """key=value lines; # starts a comment; unknown keys are errors."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from None
    for ln, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise InputError(f"{path}:{ln}: expected key=value, got {text!r}")
        key, _, raw = text.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise InputError(f"{path}:{ln}: unknown config key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](raw.strip())
        except ValueError:
            raise InputError(
                f"{path}:{ln}: bad value {raw.strip()!r} for {key}") from None
    return out


def _parse_windows(text: str) -> tuple:
    try:
        items = tuple(int(p) for p in str(text).replace(",", " ").split())
    except ValueError:
        raise InputError(f"bad window list {text!r}") from None
    if not items:
        raise InputError("window list is empty")
    return items


def _resolve(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(_parse_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _CONFIG_KEYS[key](flag)

    out = getattr(args, "out", None) or os.environ.get(OUT_ENV, "")
    if not out:
        raise InputError(f"no output path: pass --out or set {OUT_ENV}")

    cfg = RunConfig(subcommand=args.command, out=out,
                    seed=int(values.get("seed", getattr(args, "seed", None) or 0)),
                    jobs=int(getattr(args, "jobs", 1) or 1),
                    strict=bool(getattr(args, "strict", False)),
                    fps=float(values.get("fps", 25.0)),
                    state=str(values.get("state", "")),
                    values=values)
    if "k" in values:
        cfg.k = int(values["k"])
    if "windows" in values:
        cfg.windows = _parse_windows(values["windows"])
    return cfg


def write_manifest(cfg: RunConfig, path) -> None:
    """Config echo + seed + versions; no clocks, no parallelism degree."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epistate-run v1\n")
        for key, val in cfg.echo_pairs():
            fh.write(f"{key},{val}\n")
        fh.write(f"version,epistate,{__version__}\n")
        fh.write(f"version,numpy,{np.__version__}\n")
        fh.write("version,python,%d.%d.%d\n" % sys.version_info[:3])


def _manifest_for(cfg: RunConfig, out_path: str) -> str:
    if os.path.isdir(out_path) or not os.path.splitext(out_path)[1]:
        os.makedirs(out_path, exist_ok=True)
        return os.path.join(out_path, "manifest.txt")
    base, _ = os.path.splitext(out_path)
    return base + ".manifest.txt"


def _ensure_parent(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _load_sessions(paths, fps) -> list:
    if not paths:
        raise InputError("no session directories given")
    return [load_session(p, fps=fps) for p in paths]


def _require_state(cfg: RunConfig) -> State:
    if not cfg.state:
        raise InputError("--state is required for this command")
    return parse_state(cfg.state)


class _StrictWarnings:
    """Context that records warnings and escalates solver stalls."""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self._ctx = warnings.catch_warnings(record=True)

    def __enter__(self):
        self.records = self._ctx.__enter__()
        warnings.simplefilter("always")
        return self

    def __exit__(self, *exc):
        self._ctx.__exit__(*exc)
        if exc[0] is None:
            for rec in self.records:
                msg = str(rec.message)
                sys.stderr.write(f"warning: {msg}\n")
                if self.enabled and "duality gap" in msg:
                    raise ConvergenceError(msg)
        return False


# ---------------------------------------------------------------------------
# subcommands


def cmd_features(cfg: RunConfig, args) -> None:
    ref = load_reference_shape(args.reference)
    frames = load_landmarks(args.landmarks)
    series = extract_series(frames, ref, fps=cfg.fps)
    _ensure_parent(cfg.out)
    write_feature_series(series, cfg.out)
    write_manifest(cfg, _manifest_for(cfg, cfg.out))


def _score_matrix(sessions, score_fn, params=None):
    """channel x state score grid over frame-aligned session data."""
    states = sorted({s for sess in sessions for s in sess.traces},
                    key=lambda s: s.value)
    if not states:
        raise InputError("sessions carry no annotation traces")
    channels = sessions[0].features.channels
    scores = np.zeros((len(channels), len(states)))
    for j, state in enumerate(states):
        have = [s for s in sessions if state in s.traces]
        feats = np.concatenate([s.features.data for s in have], axis=0)
        trace = np.concatenate([s.traces[state].values for s in have])
        for i in range(len(channels)):
            if params is None:
                scores[i, j] = score_fn(feats[:, i], trace)
            else:
                scores[i, j] = score_fn(feats[:, i], trace, params)
    mp = params if params is not None else MicParams()
    return MicMatrix(features=channels, states=tuple(str(s) for s in states),
                     scores=scores, alpha=mp.alpha, c=mp.c)


def cmd_mic(cfg: RunConfig, args) -> None:
    sessions = _load_sessions(args.sessions, cfg.fps)
    params = MicParams(alpha=cfg.values.get("alpha", MicParams().alpha),
                       c=cfg.values.get("clumps", MicParams().c))
    matrix = _score_matrix(sessions, mic, params)
    os.makedirs(cfg.out, exist_ok=True)
    matrix.to_csv(os.path.join(cfg.out, "mic.csv"))
    with open(os.path.join(cfg.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(matrix.report())
    write_manifest(cfg, os.path.join(cfg.out, "manifest.txt"))


def cmd_pearson(cfg: RunConfig, args) -> None:
    sessions = _load_sessions(args.sessions, cfg.fps)
    matrix = _score_matrix(sessions, pearson)
    os.makedirs(cfg.out, exist_ok=True)
    matrix.to_csv(os.path.join(cfg.out, "pearson.csv"))
    lines = ["# Pearson ranking: top 3 features per state"]
    for state in matrix.states:
        ranked = " ".join(f"{f}={v:.4f}" for f, v in matrix.top(state, 3))
        lines.append(f"{state}: {ranked}")
    with open(os.path.join(cfg.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    write_manifest(cfg, os.path.join(cfg.out, "manifest.txt"))


def cmd_train(cfg: RunConfig, args) -> None:
    state = _require_state(cfg)
    sessions = _load_sessions(args.sessions, cfg.fps)
    mcfg = cfg.model_config()
    with _StrictWarnings(cfg.strict):
        weights = training_weights(sessions, state, mcfg)
        if args.ungated:
            model = train_ungated_model(sessions, state, mcfg,
                                        jobs=cfg.jobs, weights=weights)
        else:
            model = train_state_model(sessions, state, mcfg,
                                      jobs=cfg.jobs, weights=weights)
    _ensure_parent(cfg.out)
    model.save(cfg.out)
    write_manifest(cfg, _manifest_for(cfg, cfg.out))


def cmd_predict(cfg: RunConfig, args) -> None:
    model = load_model(args.model)
    if args.session:
        features = load_session(args.session, fps=cfg.fps).features
    else:
        features = load_feature_series(args.features, fps=cfg.fps)
    trace = predict_state(model, features)
    _ensure_parent(cfg.out)
    write_annotation_trace(trace, cfg.out)
    write_manifest(cfg, _manifest_for(cfg, cfg.out))


def cmd_eval(cfg: RunConfig, args) -> None:
    state = _require_state(cfg)
    sessions = _load_sessions(args.sessions, cfg.fps)
    mcfg = cfg.model_config()
    with _StrictWarnings(cfg.strict):
        if args.ablate:
            report = ablate_regions(sessions, state, mcfg, k=cfg.k,
                                    seed=cfg.seed, jobs=cfg.jobs)
        else:
            report = kfold_cv(sessions, state, mcfg, k=cfg.k,
                              seed=cfg.seed, jobs=cfg.jobs)
    os.makedirs(cfg.out, exist_ok=True)
    report.to_text(os.path.join(cfg.out, "report.txt"))
    report.write_fold_csv(os.path.join(cfg.out, "folds.csv"))
    write_manifest(cfg, os.path.join(cfg.out, "manifest.txt"))


def cmd_sweep(cfg: RunConfig, args) -> None:
    state = _require_state(cfg)
    sessions = _load_sessions(args.sessions, cfg.fps)
    mcfg = cfg.model_config()
    with _StrictWarnings(cfg.strict):
        report = window_sweep(sessions, state, cfg.windows, mcfg,
                              k=cfg.k, seed=cfg.seed, jobs=cfg.jobs)
    os.makedirs(cfg.out, exist_ok=True)
    report.to_text(os.path.join(cfg.out, "report.txt"))
    report.write_sweep_csv(os.path.join(cfg.out, "sweep.csv"))
    write_manifest(cfg, os.path.join(cfg.out, "manifest.txt"))


def cmd_synth(cfg: RunConfig, args) -> None:
    scfg = parse_synth_manifest(args.manifest)
    # a seed given on the command line or in a config file wins over
    # the manifest's; otherwise the manifest seed is authoritative
    if "seed" in cfg.values:
        scfg = replace(scfg, seed=cfg.seed)
    session = synth_session(scfg)
    write_session(session, cfg.out)
    cfg.seed = scfg.seed
    write_manifest(cfg, os.path.join(cfg.out, "manifest.txt"))


# ---------------------------------------------------------------------------
# argument surface


def _add_common(p, sessions=False):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", help=f"output path (default ${OUT_ENV})")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallelism degree; results do not depend on it")
    p.add_argument("--strict", action="store_true",
                   help="escalate solver stalls to exit code 3")
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--state", default=None)
    if sessions:
        p.add_argument("sessions", nargs="*", metavar="SESSION_DIR")


def _add_model_flags(p):
    for flag, typ in (("--window", int), ("--deadband", float),
                      ("--tau", float), ("--smooth", int),
                      ("--alpha", float), ("--clumps", int),
                      ("--mic-points", int), ("--trees", int),
                      ("--depth", int), ("--min-leaf", int),
                      ("--mtry", int), ("--bootstrap", int),
                      ("--svr-c", float), ("--epsilon", float),
                      ("--kernel", str), ("--gamma", float),
                      ("--tol", float), ("--max-iter", int)):
        p.add_argument(flag, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="epistate",
        description="Facial-feature to epistemic-state intensity pipeline")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="landmark CSV to 12-channel feature CSV")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--reference", default=None,
                   help="reference shape CSV (default: built-in neutral shape)")
    _add_common(p)

    p = sub.add_parser("mic", help="channel-state MIC score matrix")
    _add_common(p, sessions=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--clumps", type=int, default=None)

    p = sub.add_parser("pearson", help="channel-state Pearson matrix")
    _add_common(p, sessions=True)

    p = sub.add_parser("train", help="fit a region-gated intensity model")
    _add_common(p, sessions=True)
    _add_model_flags(p)
    p.add_argument("--ungated", action="store_true",
                   help="train the single-regressor arm instead")

    p = sub.add_parser("predict", help="run a saved model over a session")
    p.add_argument("--model", required=True)
    p.add_argument("--session", default=None)
    p.add_argument("--features", default=None)
    _add_common(p)

    p = sub.add_parser("eval", help="k-fold cross validation, optional ablation")
    _add_common(p, sessions=True)
    _add_model_flags(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--ablate", action="store_true",
                   help="also evaluate the region-free arm on the same folds")

    p = sub.add_parser("sweep", help="window-size sweep")
    _add_common(p, sessions=True)
    _add_model_flags(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--windows", default=None,
                   help="comma-separated window sizes")

    p = sub.add_parser("synth", help="generate a synthetic session")
    p.add_argument("--manifest", required=True)
    _add_common(p)

    return ap


_DISPATCH = {
    "features": cmd_features,
    "mic": cmd_mic,
    "pearson": cmd_pearson,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "predict":
            if bool(args.session) == bool(args.features):
                raise InputError("pass exactly one of --session or --features")
        _DISPATCH[args.command](cfg, args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except NumericError as exc:
        sys.stderr.write(f"numeric error: {exc}\n")
        return 3
    except PipelineError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
