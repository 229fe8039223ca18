# SPDX-License-Identifier: Apache-2.0
"""Distributional discrepancy evaluation toolkit.

Thin Python facade over the C++ core. The heavy lifting (sampling, exact
total variation, classifier training, ranking experiments) happens in the
compiled ``_ddeval`` extension; this package re-exports it and adds a couple
of JSON conveniences.
"""

import json as _json

try:
    from ._ddeval import (  # type: ignore[attr-defined]
        DataError,
        Model,
        NumericError,
        UsageError,
        bleu_score,
        builtin_models,
        classifier_dd,
        fed_score,
        fit_model,
        kendall_tau,
        kn_nll,
        load_model,
        oracle_dd,
        run_experiment_json,
        sample_lines,
        self_bleu_score,
        temperature_sweep_json,
    )
except ImportError:  # extension built next to the package, not inside it
    from _ddeval import (  # type: ignore[no-redef]
        DataError,
        Model,
        NumericError,
        UsageError,
        bleu_score,
        builtin_models,
        classifier_dd,
        fed_score,
        fit_model,
        kendall_tau,
        kn_nll,
        load_model,
        oracle_dd,
        run_experiment_json,
        sample_lines,
        self_bleu_score,
        temperature_sweep_json,
    )

__all__ = [
    "DataError",
    "Model",
    "NumericError",
    "UsageError",
    "bleu_score",
    "builtin_models",
    "classifier_dd",
    "fed_score",
    "fit_model",
    "kendall_tau",
    "kn_nll",
    "load_model",
    "oracle_dd",
    "run_experiment",
    "run_experiment_json",
    "sample_lines",
    "self_bleu_score",
    "temperature_sweep",
    "temperature_sweep_json",
]

__version__ = "0.1.0"


def run_experiment(config):
    """Run a ranking experiment from a config dict; returns the report dict."""
    return _json.loads(run_experiment_json(_json.dumps(config)))


def temperature_sweep(config, temperatures):
    """Re-run a config across a temperature grid; returns the report dict."""
    return _json.loads(
        temperature_sweep_json(_json.dumps(config), list(temperatures))
    )
