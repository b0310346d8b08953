import numpy as np
import pytest

from fedl.errors import DataFormatError
from fedl.model_io import (
    load_network,
    network_from_bytes,
    network_to_bytes,
    save_network,
)
from fedl.nn import Activation, LayerSpec, init_network


def sample_net(seed=17):
    specs = [
        LayerSpec(5, 8, Activation.TANH),
        LayerSpec(8, 8, Activation.TANH, dropout=0.15),
        LayerSpec(8, 1, Activation.IDENTITY),
    ]
    return init_network(specs, seed)


def test_roundtrip_is_byte_identical():
    net = sample_net()
    blob = network_to_bytes(net)
    clone = network_from_bytes(blob)
    assert network_to_bytes(clone) == blob
    assert clone.specs == net.specs
    for a, b in zip(net.weights, clone.weights):
        assert np.array_equal(a, b)
    for a, b in zip(net.biases, clone.biases):
        assert np.array_equal(a, b)


def test_blob_starts_with_magic():
    assert network_to_bytes(sample_net())[:4] == b"FEDL"


def test_roundtrip_through_file(tmp_path):
    net = sample_net(seed=4)
    path = tmp_path / "model.fedl"
    save_network(net, path)
    clone = load_network(path)
    assert network_to_bytes(clone) == network_to_bytes(net)


def test_loaded_network_predicts_identically():
    from fedl.nn import Mode, forward

    net = sample_net(seed=9)
    clone = network_from_bytes(network_to_bytes(net))
    X = np.random.default_rng(0).normal(size=(6, 5))
    a, _ = forward(net, X, mode=Mode.INFER)
    b, _ = forward(clone, X, mode=Mode.INFER)
    assert np.array_equal(a, b)


def test_bad_magic_rejected():
    blob = bytearray(network_to_bytes(sample_net()))
    blob[:4] = b"NOPE"
    with pytest.raises(DataFormatError):
        network_from_bytes(bytes(blob))


def test_unknown_version_rejected():
    blob = bytearray(network_to_bytes(sample_net()))
    blob[4] = 99  # little-endian u32 version field
    with pytest.raises(DataFormatError):
        network_from_bytes(bytes(blob))


def test_truncation_rejected():
    blob = network_to_bytes(sample_net())
    with pytest.raises(DataFormatError):
        network_from_bytes(blob[: len(blob) // 2])
    with pytest.raises(DataFormatError):
        network_from_bytes(blob[:6])


def test_trailing_garbage_rejected():
    blob = network_to_bytes(sample_net())
    with pytest.raises(DataFormatError):
        network_from_bytes(blob + b"\x00")


def test_dropout_survives_roundtrip():
    net = sample_net()
    clone = network_from_bytes(network_to_bytes(net))
    assert clone.specs[1].dropout == 0.15
    assert clone.specs[1].activation is Activation.TANH
    assert clone.specs[2].activation is Activation.IDENTITY
