import numpy as np
import pytest

from fedl.data import build_schema, encode_features, split_train_test, synth_generate


@pytest.fixture(scope="session")
def small_corpus():
    """400 transactions over 6 stations with a known generating function."""
    records, stations, meta = synth_generate(6, 400, seed=11)
    return records, stations, meta


@pytest.fixture(scope="session")
def encoded_split(small_corpus):
    """(X_train, y_train, X_test, test_records, schema) for the small corpus."""
    records, _, _ = small_corpus
    train, test = split_train_test(records, 0.8, seed=5)
    vocab = sorted({r.station_id for r in records})
    schema = build_schema(train, True, station_vocabulary=vocab)
    X_train, y_train = encode_features(train, schema)
    X_test, _ = encode_features(test, schema)
    return X_train, y_train, X_test, test, schema


def params_fingerprint(network) -> bytes:
    import hashlib

    h = hashlib.sha256()
    for w, b in zip(network.weights, network.biases):
        h.update(np.ascontiguousarray(w).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.digest()
