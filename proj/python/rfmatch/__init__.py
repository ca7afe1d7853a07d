"""Surrogate-assisted impedance matching.

Thin Python layer over the C++ core. Run configs are plain dicts with the
same fields as the CLI's run-config JSON files.
"""

import json
import os
from pathlib import Path

_data = Path(__file__).resolve().parent / "data"
if (_data / "reference_circuit.json").exists():
    os.environ.setdefault("RFMATCH_DATA_DIR", str(_data))

from ._core import *  # noqa: E402,F401,F403
from . import _core  # noqa: E402

__all__ = [name for name in dir(_core) if not name.startswith("_")] + ["preset", "run", "train_recbm", "train_ims"]


def preset(profile="desk"):
    """Preset run config for ``profile`` as a dict."""
    return json.loads(_core.preset_config(profile))


def _dump(config):
    return "" if config is None else json.dumps(config)


def run(config=None, circuit=None, recbm=None, ims=None, out_dir=None):
    """Run the configured strategies over a seeded scenario suite.

    Returns ``{strategy: summary}``; with ``out_dir`` the full report is
    written there as well.
    """
    circuit = circuit if circuit is not None else Circuit.reference()
    return _core.run_matching(_dump(config), circuit, recbm, ims, None if out_dir is None else str(out_dir))


def train_recbm(sweep_rows, circuit=None, config=None):
    circuit = circuit if circuit is not None else Circuit.reference()
    return _core.train_recbm(_dump(config), sweep_rows, circuit)


def train_ims(recbm, config=None, f_step_ghz=0.05, c_step_pf=0.2):
    return _core.train_ims(_dump(config), recbm, f_step_ghz, c_step_pf)
