"""Multiple-mediator causal mediation analysis."""

import json
import os

from . import _multimed
from ._multimed import AnalysisError, InputError, __version__

__all__ = ["AnalysisError", "InputError", "__version__", "analyze", "check_dag", "oracle", "simulate"]


def _text(dag):
    if os.path.exists(dag):
        with open(dag, encoding="utf-8") as f:
            return f.read()
    return dag


def simulate(dag, n, seed, scale=1.0):
    """Draw n rows from a random SCM over `dag` (path or text).

    Returns (columns, csv_text, spec_text); columns maps names to numpy arrays.
    """
    return _multimed.simulate(_text(dag), n, seed, scale)


def check_dag(dag):
    """Ignorability of every mediator, as a list of dicts."""
    return json.loads(_multimed.check_dag(_text(dag)))


def oracle(spec, n_mc=1_000_000, seed=0):
    """Ground-truth effects of an archived SCM (path or text)."""
    return json.loads(_multimed.oracle(_text(spec), n_mc, seed))


def analyze(dag_path, data_path, seed, bootstrap=1000, estimator="dr", level=0.95, threads=1,
            allow_unidentified=False, spec_path=None, n_mc=1_000_000):
    """Run the analysis and return the report as a dict."""
    report = _multimed.analyze(os.fspath(dag_path), os.fspath(data_path), seed, bootstrap, estimator, level,
                               threads, allow_unidentified, os.fspath(spec_path) if spec_path else "", n_mc)
    return json.loads(report)
