"""Spatio-temporal Bayesian forecasting of daily EV charging sessions."""

from pathlib import Path

from ._core import (
    InputError,
    NumericalError,
    bootstrap_ci,
    dominance,
    icar_structure,
    irls_poisson,
    knn_graph,
    mae,
    mape,
    matern_correlation,
    range_variance,
    rmse,
    run_cli,
    rw2_structure,
)


def _cli(*args, config=None, seed=None, out="out"):
    argv = []
    if config is not None:
        argv += ["--config", str(config)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    argv += ["--out", str(out)]
    code = run_cli(argv + [str(a) for a in args])
    if code != 0:
        raise RuntimeError(f"chargecast {args[0]} exited with {code}")
    return Path(out)


def ingest(config, out="out/ingest"):
    return _cli("ingest", config=config, out=out)


def fit(data, spatial="icar", config=None, seed=None, out=None):
    return _cli("fit", "--spatial", spatial, "--data", data, config=config, seed=seed, out=out or f"out/{spatial}")


def predict(fit_dir, frame, out="out/predict"):
    return _cli("predict", "--fit", fit_dir, "--frame", frame, out=out)


def evaluate(predictions, truth, out="out/evaluate"):
    return _cli("evaluate", "--predictions", predictions, "--truth", truth, out=out)


__all__ = [
    "InputError", "NumericalError", "bootstrap_ci", "dominance", "evaluate", "fit", "icar_structure", "ingest",
    "irls_poisson", "knn_graph", "mae", "mape", "matern_correlation", "predict", "range_variance", "rmse",
    "run_cli", "rw2_structure",
]
