#!/usr/bin/env python3
"""Freeze the golden NNC fixture: a 2-layer model encoded at 5 bits, seed 42.

Run once; tests assert the encoder still reproduces these bytes and an
independent parser re-reads every field.
"""

import sys
from pathlib import Path

import numpy as np

from nncodec.codec import compress
from nncodec.model_io import LayerParams, NetworkModel, ParamKind, write_model

out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
rng = np.random.default_rng(5)
model = NetworkModel(
    [
        LayerParams("conv", ParamKind.CONV, np.round(rng.normal(0, 0.3, (3, 3, 2, 2)), 3)),
        LayerParams("conv.bias", ParamKind.BIAS, np.round(rng.normal(0, 0.1, 12), 3)),
    ],
    b"golden fixture v1",
)
(out / "golden_2layer.nnm").write_bytes(write_model(model))
(out / "golden_2layer_n5.nnc").write_bytes(compress(model, 5, seed=42))
