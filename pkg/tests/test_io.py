import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from maxtomo.io import (
    FormatError,
    VolumeFile,
    read_centers_csv,
    read_fourier_csv,
    write_centers_csv,
    write_fourier_csv,
)
from maxtomo.recon import FourierTable, analytic_table

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(
    arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)), elements=finite),
    st.tuples(st.floats(1e-6, 10), st.floats(1e-6, 10), st.floats(1e-6, 10)),
    st.sampled_from(["contrast", "field", "impedance"]),
)
def test_volume_round_trip_bit_exact(re, spacing, kind):
    data = re + 1j * re[::-1]
    vf = VolumeFile(data, spacing, kind)
    raw = vf.to_bytes()
    back = VolumeFile.from_bytes(raw)
    assert back.to_bytes() == raw
    assert back.data.tobytes() == vf.data.tobytes()
    assert back.spacing == vf.spacing and back.kind == kind


def test_volume_signed_zero_survives():
    data = np.array([complex(0.0, -0.0), complex(-0.0, 0.0)]).reshape(2, 1, 1)
    raw = VolumeFile(data, (1, 1, 1)).to_bytes()
    assert VolumeFile.from_bytes(raw).to_bytes() == raw


def test_volume_layout():
    data = np.arange(2 * 3 * 4).reshape(2, 3, 4) + 0.5j
    raw = VolumeFile(data, (0.5, 0.25, 0.125)).to_bytes()
    head, header, payload = raw.split(b"\n", 2)
    assert head == b"MXC1"
    assert header == b"dims 2 3 4 | spacing 0.5 0.25 0.125 | kind contrast"
    pairs = np.frombuffer(payload, "<f8")
    # x index fastest: second value pair is data[1, 0, 0]
    assert pairs[0] == 0 and pairs[1] == 0.5 and pairs[2] == data[1, 0, 0].real


def test_volume_rejects_garbage():
    with pytest.raises(FormatError):
        VolumeFile.from_bytes(b"NOPE\n")
    raw = VolumeFile(np.ones((2, 2, 2)), (1, 1, 1)).to_bytes()
    with pytest.raises(FormatError):
        VolumeFile.from_bytes(raw[:-8])
    with pytest.raises(FormatError):
        VolumeFile(np.ones((2, 2, 2)), (1, 1, 1), "banana")


def test_empty_fourier_csv_is_header_only(tmp_path):
    p = write_fourier_csv(FourierTable.empty(), tmp_path / "f.csv")
    assert p.read_text() == "lx,ly,lz,re,im,s,route\n"
    assert len(read_fourier_csv(p)) == 0


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20))
def test_fourier_csv_round_trip(tmp_path_factory, vals):
    v = np.array([complex(a, b) for a, b in vals])
    L = np.random.default_rng(0).normal(size=(len(v), 3)) * 1e3
    table = analytic_table(lambda l: v, L)
    p = write_fourier_csv(table, tmp_path_factory.mktemp("csv") / "f.csv")
    back = read_fourier_csv(p)
    assert np.array_equal(back.values, v) and np.array_equal(back.l, L)


def test_centers_csv_two_rows(tmp_path):
    c = np.array([[0.3, 0.5, 0.5], [0.7, 0.5, 0.5]])
    q = np.array([1e-4 + 2e-5j, 3.3e-4 - 1e-6j])
    p = write_centers_csv(c, q, tmp_path / "c.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "j,x,y,z,q_re,q_im" and len(lines) == 3
    c2, q2 = read_centers_csv(p)
    assert np.array_equal(c, c2) and np.array_equal(q, q2)
