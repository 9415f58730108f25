"""Gradient-backend selection and parity."""

import os
import subprocess
import sys

import numpy as np
import pytest

import airfedsim
from airfedsim import _gradnumpy
from airfedsim import rng as rngmod
from airfedsim.nn import ArchSpec, init_model

cython_available = pytest.importorskip


def _kernel_inputs(activation="relu", loss="cross_entropy", batch=16):
    arch = ArchSpec((12, 10, 7, 3), activation, loss)
    model = init_model(arch, rngmod.stream(50, "init"))
    probe = rngmod.stream(50, "probe")
    X = probe.standard_normal((batch, 12))
    y = np.ascontiguousarray(probe.integers(0, 3, batch), dtype=np.int64)
    return arch, model, X, y


@pytest.mark.parametrize("activation", ["relu", "tanh"])
@pytest.mark.parametrize("loss", ["cross_entropy", "squared_error"])
def test_backend_parity(activation, loss):
    _gradkernels = pytest.importorskip("airfedsim._gradkernels")
    arch, model, X, y = _kernel_inputs(activation, loss)
    g_np, l_np = _gradnumpy.per_sample_grads(
        model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
    )
    g_cy, l_cy = _gradkernels.per_sample_grads(
        model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
    )
    np.testing.assert_allclose(g_cy, g_np, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(l_cy, l_np, rtol=1e-12, atol=1e-15)


def test_losses_only_entry_point_parity():
    _gradkernels = pytest.importorskip("airfedsim._gradkernels")
    arch, model, X, y = _kernel_inputs("tanh", "squared_error")
    l_np = _gradnumpy.per_sample_losses(
        model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
    )
    l_cy = _gradkernels.per_sample_losses(
        model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
    )
    np.testing.assert_allclose(l_cy, l_np, rtol=1e-12)


def test_env_var_forces_python_backend():
    code = (
        "import airfedsim; import airfedsim.nn as nn; "
        "print(airfedsim.BACKEND)"
    )
    env = dict(os.environ, AIRFEDSIM_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_selected_backend_reported():
    assert airfedsim.BACKEND in ("cython", "python")
