import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from independent import nnm_bytes
from nncodec.errors import (
    BadMagic,
    DuplicateLayerName,
    InvalidModel,
    MalformedHeader,
    NonFiniteValue,
    TruncatedBlob,
)
from nncodec.model_io import LayerParams, NetworkModel, ParamKind, read_model, write_model


def test_single_bias_bit_exact():
    data = nnm_bytes([("b", "bias", [0.5, -1.0])])
    m = read_model(data)
    assert len(m.layers) == 1
    assert m.layers[0].kind is ParamKind.BIAS
    assert m.layers[0].values.tobytes() == np.array([0.5, -1.0], "<f4").tobytes()


def test_bad_magic():
    data = b"XXXX" + nnm_bytes([("b", "bias", [1.0])])[4:]
    with pytest.raises(BadMagic):
        read_model(data)


def test_hand_written_fixture_round_trips_byte_identical():
    rng = np.random.default_rng(3)
    data = nnm_bytes(
        [
            ("conv1", "conv", rng.normal(size=(3, 3, 2, 4))),
            ("fc", "dense", rng.normal(size=(5, 7))),
            ("bn", "norm", rng.normal(size=4)),
        ],
        b"arch\x00\xff",
    )
    assert write_model(read_model(data)) == data


def test_random_models_round_trip(rng):
    for _ in range(10):
        m = random_model(rng, n_layers=5)
        assert read_model(write_model(m)) == m
        assert write_model(m) == write_model(m)


def test_empty_model_rejected():
    with pytest.raises(InvalidModel):
        write_model(NetworkModel([]))


def test_duplicate_names_rejected():
    layers = [LayerParams("a", ParamKind.BIAS, [1.0]), LayerParams("a", ParamKind.NORM, [2.0])]
    with pytest.raises(InvalidModel):
        write_model(NetworkModel(layers))
    data = nnm_bytes([("a", "bias", [1.0]), ("a", "norm", [2.0])])
    with pytest.raises(DuplicateLayerName):
        read_model(data)


def test_nan_rejected_on_read_and_write():
    with pytest.raises(InvalidModel):
        write_model(NetworkModel([LayerParams("a", ParamKind.BIAS, [np.nan, 1.0])]))
    data = nnm_bytes([("a", "bias", [1.0, 2.0])])
    data = data[:-4] + struct.pack("<f", float("inf"))
    with pytest.raises(NonFiniteValue):
        read_model(data)


def test_truncated_blob():
    data = nnm_bytes([("a", "dense", np.ones((4, 4)))])
    with pytest.raises(TruncatedBlob):
        read_model(data[:-8])


@pytest.mark.parametrize("mangle", [
    lambda d: d[:8],
    lambda d: d[:4] + struct.pack("<Q", 10 ** 9) + d[12:],
    lambda d: d[:12] + b"[" + d[13:],
    lambda d: d + b"\x00",
])
def test_malformed_header(mangle):
    data = nnm_bytes([("a", "bias", [1.0, 2.0])])
    with pytest.raises(MalformedHeader):
        read_model(mangle(data))


def test_kind_shape_consistency():
    with pytest.raises(InvalidModel):
        LayerParams("k", ParamKind.CONV, np.zeros((1, 1, 2, 2))).validate()
    with pytest.raises(InvalidModel):
        LayerParams("k", ParamKind.BIAS, np.zeros((2, 2))).validate()
    with pytest.raises(MalformedHeader):
        read_model(nnm_bytes([("k", "dense", np.zeros(4))]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(width=32, allow_nan=False, allow_infinity=False), min_size=1, max_size=50),
       st.binary(max_size=30))
def test_round_trip_property(values, meta):
    m = NetworkModel([LayerParams("v", ParamKind.NORM, values)], meta)
    back = read_model(write_model(m))
    assert back == m
    assert back.arch_meta == meta
