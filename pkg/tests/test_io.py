import numpy as np
import pytest

from vflcopula import io
from vflcopula.harness.missing import Mcar, inject_missing

from conftest import tiny_mixed_dataset


def test_csv_round_trip(tmp_path):
    ds = tiny_mixed_dataset()
    ds = inject_missing(ds, Mcar((0.2, 0.3)), np.random.default_rng(0))
    csv_p = tmp_path / "d.csv"
    part_p = tmp_path / "d.json"
    io.write_dataset(ds, csv_p, part_p)
    back = io.read_dataset(csv_p, part_p)
    assert back.n_rows == ds.n_rows and back.p == ds.p
    assert np.array_equal(back.mask, ds.mask)
    assert [str(k) for k in back.kinds] == [str(k) for k in ds.kinds]
    assert back.partition.blocks == ds.partition.blocks
    for j in range(ds.p + 1):
        obs = ds.observed_rows(j)
        assert np.array_equal(back.columns[j][obs], ds.columns[j][obs])


def test_kind_tokens():
    assert str(io.parse_kind("cat5")) == "cat5"
    assert io.parse_kind("cont").tag == "cont"
    with pytest.raises(ValueError):
        io.parse_kind("categorical")


def test_partial_block_missing_rejected(tmp_path):
    csv_p = tmp_path / "bad.csv"
    part_p = tmp_path / "bad.json"
    csv_p.write_text("y:cont,a:cont,b:cont\n1.0,2.0,\n", encoding="utf-8")
    part_p.write_text('{"blocks": [[0, 2]], "response_owner": 0}', encoding="utf-8")
    with pytest.raises(ValueError, match="partially missing"):
        io.read_dataset(csv_p, part_p)


def test_missing_response_rejected(tmp_path):
    csv_p = tmp_path / "bad.csv"
    part_p = tmp_path / "bad.json"
    csv_p.write_text("y:cont,a:cont\n,2.0\n", encoding="utf-8")
    part_p.write_text('{"blocks": [[0, 1]], "response_owner": 0}', encoding="utf-8")
    with pytest.raises(ValueError, match="response"):
        io.read_dataset(csv_p, part_p)


def test_header_must_carry_kinds(tmp_path):
    csv_p = tmp_path / "bad.csv"
    part_p = tmp_path / "bad.json"
    csv_p.write_text("y,a\n1.0,2.0\n", encoding="utf-8")
    part_p.write_text('{"blocks": [[0, 1]], "response_owner": 0}', encoding="utf-8")
    with pytest.raises(ValueError):
        io.read_dataset(csv_p, part_p)
