import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vflcopula import federation as fed
from vflcopula import pipelines as pl
from vflcopula.harness.missing import Mcar, inject_missing

from conftest import tiny_mixed_dataset


def deep_equal(a, b):
    if isinstance(a, np.ndarray):
        return isinstance(b, np.ndarray) and np.array_equal(a, b)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(deep_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict):
        return set(a) == set(b) and all(deep_equal(a[k], b[k]) for k in a)
    return a == b


def test_control_round_trips_exactly():
    m = fed.control(0, 0)
    out = fed.wire_decode(fed.wire_encode(m))
    assert out.kind == "Control" and out.payload == {"round": 0, "phase": 0}


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=64))
@settings(max_examples=200, deadline=None)
def test_real_vectors_round_trip_bit_exact(vals):
    m = fed.embedding_share(0, np.asarray(vals, dtype=np.float64))
    out = fed.wire_decode(fed.wire_encode(m))
    assert np.array_equal(out.payload["zeta"], np.asarray(vals), equal_nan=False)


def test_rank_share_round_trip(rng):
    m = fed.rank_share(
        1, [3, 4],
        [rng.normal(size=10_000), rng.normal(size=5)],
        [0.2689414213699951, 0.0],
        [np.arange(10_000), np.array([1, 2, 5, 7, 9])],
        [np.packbits(rng.integers(0, 2, 1000).astype(np.uint8)), np.zeros(2, dtype=np.uint8)],
        [True, False],
    )
    out = fed.wire_decode(fed.wire_encode(m))
    assert deep_equal(m.payload, out.payload)


def test_frame_guards():
    with pytest.raises(ValueError, match="2\\^30"):
        fed.wire_decode((2**31).to_bytes(4, "big") + b"")
    with pytest.raises(ValueError, match="truncated"):
        fed.wire_decode(b"\x00\x00\x00\x10abc")
    good = fed.wire_encode(fed.control(1, 2))
    with pytest.raises(ValueError):
        fed.wire_decode(good[:-1])
    bad = good[:4] + good[4:].replace(b"Control", b"Unknown")
    with pytest.raises(ValueError):
        fed.wire_decode(bad[:4] + bad[4:])


def test_unknown_kind_rejected_at_construction():
    with pytest.raises(ValueError):
        fed.Message("RawColumns", {})


def test_run_round_echo_single_client():
    f = fed.Federation(1, transport=fed.MemoryTransport())
    payload = np.arange(5.0)
    out = f.run_round(
        lambda k: [fed.embedding_share(k, payload)],
        lambda inbox: {0: [fed.broadcast_state(inbox[0][0].payload["zeta"], np.zeros(1))]},
    )
    assert np.array_equal(out[0][0].payload["h"], payload)


def test_run_round_barrier_counts():
    f = fed.Federation(3, transport=fed.MemoryTransport())
    seen = {}

    def server(inbox):
        seen["n"] = sum(len(v) for v in inbox.values())
        return {}

    f.run_round(lambda k: [fed.embedding_share(k, np.zeros(2))], server)
    assert seen["n"] == 3


def test_client_failure_names_client():
    f = fed.Federation(2, transport=fed.MemoryTransport())

    def bad(k):
        if k == 1:
            raise RuntimeError("boom")
        return []

    with pytest.raises(fed.ClientStepError, match="client 1"):
        f.run_round(bad, lambda inbox: {})


def test_parallel_round_matches_serial():
    def cstep(k):
        return [fed.embedding_share(k, np.full(4, float(k)))]

    def sstep(inbox):
        tot = sum(m.payload["zeta"] for v in inbox.values() for m in v)
        return {k: [fed.broadcast_state(tot, np.zeros(1))] for k in inbox}

    outs = []
    for parallel in (False, True):
        f = fed.Federation(4, transport=fed.MemoryTransport(), parallel=parallel)
        outs.append(f.run_round(cstep, sstep))
    assert np.array_equal(outs[0][2][0].payload["h"], outs[1][2][0].payload["h"])


def masked_tiny_dataset():
    ds = tiny_mixed_dataset(n=60)
    return inject_missing(ds, Mcar((0.1, 0.2)), np.random.default_rng(5))


@pytest.mark.parametrize("method,t", [("vcds", 1), ("evcds", 1), ("ievcds", 2)])
def test_transport_transparency(method, t):
    """Memory and loopback-wire transports give bit-identical pipelines."""
    ds = masked_tiny_dataset()
    results = []
    for tname in ("memory", "loopback"):
        tr = fed.make_transport(tname)
        f = fed.Federation(2, transport=tr)
        cfg = pl.PrivatizationConfig(method=method, eps1=[1.0, 1.0], eps2=[1.0, 1.0],
                                     t_iterations=t, seed=11)
        synth, rep = pl.run_pipeline(ds, cfg, federation=f)
        tr.close()
        results.append(synth)
    for j in range(ds.p + 1):
        assert np.array_equal(results[0].columns[j], results[1].columns[j]), f"column {j}"


def _all_column_multisets(ds):
    return [np.sort(c[ds.observed_rows(j)]) for j, c in enumerate(ds.columns)]


def _scan_payload_vectors(payload, out):
    if isinstance(payload, np.ndarray) and payload.dtype == np.float64:
        if payload.ndim == 1:
            out.append(payload)
        else:
            for col in payload.T:
                out.append(col)
    elif isinstance(payload, dict):
        for v in payload.values():
            _scan_payload_vectors(v, out)
    elif isinstance(payload, (list, tuple)):
        for v in payload:
            _scan_payload_vectors(v, out)


@pytest.mark.parametrize("method,t", [("vcds", 1), ("evcds", 1), ("ievcds", 2)])
def test_no_raw_data_in_transcript(method, t):
    """No frame payload reproduces any original data column as a multiset."""
    ds = masked_tiny_dataset()
    tr = fed.MemoryTransport(record=True)
    f = fed.Federation(2, transport=tr)
    cfg = pl.PrivatizationConfig(method=method, eps1=[1.0, 1.0], eps2=[1.0, 1.0],
                                 t_iterations=t, seed=3)
    pl.run_pipeline(ds, cfg, federation=f)
    originals = _all_column_multisets(ds)
    vectors = []
    for _, _, msg in tr.transcript:
        _scan_payload_vectors(msg.payload, vectors)
    assert vectors, "transcript should contain numeric payloads"
    for vec in vectors:
        s = np.sort(vec)
        for orig in originals:
            if len(s) == len(orig):
                assert not np.array_equal(s, orig), "raw column leaked into a message"
