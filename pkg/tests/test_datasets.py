import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import chord_bisection, chord_quadrature
from tctbundle.datasets import CHUNK, RndConfig, generate_rnd, rnd_array, sample_mixture, write_rnd
from tctbundle.phantom import (
    Ellipse,
    Ray,
    SgsPhantomConfig,
    chord_lengths,
    ellipse_line_integral,
    generate_sgs,
    sgs_rotation,
    sinogram,
    sinogram_stats,
    write_sgs,
)
from tctbundle.records import (
    HEADER,
    KIND_ESTIMATES,
    BundleRecord,
    DatasetHeaderError,
    DatasetReader,
    DatasetTruncatedError,
    DatasetVersionError,
    Header,
    estimate_dtype,
    read_dataset,
    records_from_list,
    write_dataset,
)


@pytest.fixture(scope="module")
def small_rnd():
    return rnd_array(RndConfig(n_bundles=10_000, seed=3))


def test_round_trip_bit_identical(tmp_path, small_rnd):
    p = tmp_path / "a.bin"
    assert write_dataset([small_rnd[:4000], small_rnd[4000:]], p) == 10_000
    back = read_dataset(p).read_all()
    assert back.tobytes() == small_rnd.tobytes()
    r = DatasetReader(p)
    assert len(r) == 10_000
    rec = r[1234]
    assert isinstance(rec, BundleRecord)
    np.testing.assert_array_equal(rec.counts, small_rnd[1234]["counts"])
    assert rec.bundle_index == 1234
    assert r[-1].bundle_index == 9999
    assert sum(len(c) for c in r.chunks(3000)) == 10_000


def test_records_from_list(small_rnd):
    recs = [BundleRecord.from_row(row) for row in small_rnd[:50]]
    assert records_from_list(recs).tobytes() == small_rnd[:50].tobytes()


def test_truncated_file(tmp_path, small_rnd):
    p = tmp_path / "t.bin"
    write_dataset([small_rnd[:100]], p)
    raw = p.read_bytes()
    p.write_bytes(raw[: HEADER.size + 57 * small_rnd.dtype.itemsize + 10])
    with pytest.raises(DatasetTruncatedError) as e:
        DatasetReader(p)
    assert e.value.index == 57
    assert "57" in str(e.value)


def test_header_errors(tmp_path, small_rnd):
    p = tmp_path / "h.bin"
    write_dataset([small_rnd[:3]], p)
    raw = bytearray(p.read_bytes())
    bad = bytearray(raw)
    bad[4] = 9
    p.write_bytes(bytes(bad))
    with pytest.raises(DatasetVersionError):
        DatasetReader(p)
    bad = bytearray(raw)
    bad[:4] = b"XXXX"
    p.write_bytes(bytes(bad))
    with pytest.raises(DatasetHeaderError):
        DatasetReader(p)
    p.write_bytes(bytes(raw[:10]))
    with pytest.raises(DatasetHeaderError):
        DatasetReader(p)
    assert not issubclass(DatasetVersionError, DatasetTruncatedError)


def test_estimate_records(tmp_path):
    e = np.zeros(5, dtype=estimate_dtype())
    e["x_hat"] = np.arange(15.0).reshape(5, 3)
    e["bundle_index"] = np.arange(5)
    p = tmp_path / "e.bin"
    write_dataset([e], p, Header(kind=KIND_ESTIMATES))
    r = DatasetReader(p)
    assert r.header.kind == KIND_ESTIMATES
    assert r.read_all().tobytes() == e.tobytes()


def test_index_out_of_range(tmp_path, small_rnd):
    p = tmp_path / "i.bin"
    write_dataset([small_rnd[:5]], p)
    with pytest.raises(IndexError):
        DatasetReader(p).read(3, 5)


def test_rnd_config_validation():
    with pytest.raises(ValueError):
        RndConfig(weights=(0.5, 0.3, 0.3))
    with pytest.raises(ValueError):
        RndConfig(shapes=((2.0, 4.0), (4.0, 0.0), (6.0, 2.0)))
    assert RndConfig().mixture_mean() == pytest.approx(9.2 * (0.4 / 3 + 0.15 + 0.225))


def test_mixture_mean_and_ks():
    cfg = RndConfig()
    x = sample_mixture(cfg, 1_000_000, np.random.default_rng(17))
    assert abs(x.mean() - 4.68) < 0.01
    assert x.min() >= 0 and x.max() <= 9.2
    assert stats.kstest(x, cfg.cdf).statistic < 0.002


def test_rnd_records(small_rnd):
    x = small_rnd["x_true"]
    assert np.all((x >= 0) & (x <= 9.2))
    assert np.all((small_rnd["n0"] >= 75_000) & (small_rnd["n0"] <= 300_000))
    np.testing.assert_array_equal(small_rnd["bundle_index"], np.arange(10_000))
    frac = np.bincount(small_rnd["split"], minlength=3) / 10_000
    np.testing.assert_allclose(frac, [0.8, 0.1, 0.1], atol=0.015)


def test_splits_disjoint_exhaustive(small_rnd):
    idx = [set(small_rnd["bundle_index"][small_rnd["split"] == s].tolist()) for s in range(3)]
    assert not (idx[0] & idx[1]) and not (idx[0] & idx[2]) and not (idx[1] & idx[2])
    assert set().union(*idx) == set(range(10_000))


def test_equal_attenuation_and_fixed_dose():
    a = rnd_array(RndConfig(n_bundles=500, seed=1, equal_attenuation=True, tcm=None, fixed_n0=5e4))
    x = a["x_true"]
    assert np.all(x[:, 0] == x[:, 1]) and np.all(x[:, 1] == x[:, 2])
    assert np.all(a["n0"] == 5e4)


def test_rnd_deterministic_across_workers(tmp_path):
    cfg = RndConfig(n_bundles=CHUNK + 5000, seed=99)
    a = rnd_array(cfg, workers=1)
    b = rnd_array(cfg, workers=2)
    assert a.tobytes() == b.tobytes()
    write_rnd(cfg, tmp_path / "w1.bin", 1)
    write_rnd(cfg, tmp_path / "w2.bin", 2)
    assert (tmp_path / "w1.bin").read_bytes() == (tmp_path / "w2.bin").read_bytes()
    c = rnd_array(RndConfig(n_bundles=CHUNK + 5000, seed=100))
    assert a.tobytes() != c.tobytes()


def test_rnd_prefix_stable():
    a = rnd_array(RndConfig(n_bundles=CHUNK + 10, seed=5))
    b = next(generate_rnd(RndConfig(n_bundles=2 * CHUNK, seed=5)))
    assert a[:CHUNK].tobytes() == b.tobytes()


def test_chord_center_and_tangent():
    c = Ellipse(0.0, 0.0, 30.0, 30.0, 0.0, 0.02)
    assert ellipse_line_integral(c, Ray(-100.0, 0.0, 1.0, 0.0)) == pytest.approx(60 * 0.02, rel=1e-14)
    assert ellipse_line_integral(c, Ray(-100.0, 30.0, 1.0, 0.0)) == 0.0
    assert ellipse_line_integral(c, Ray(-100.0, 31.0, 1.0, 0.0)) == 0.0
    e = Ellipse(5.0, -3.0, 40.0, 10.0, 0.0, 1.0)
    assert ellipse_line_integral(e, Ray(5.0, -100.0, 0.0, 1.0)) == pytest.approx(20.0, rel=1e-14)


def test_chord_against_quadrature():
    got = float(chord_lengths(Ellipse(10.0, 5.0, 50.0, 50.0, 0.0, 1.0), -200.0, 25.0, 1.0, 0.0))
    assert got == pytest.approx(2 * np.sqrt(50**2 - 20**2), rel=1e-14)
    assert got == pytest.approx(chord_quadrature(10.0, 5.0, 50.0, -200.0, 25.0, 1.0, 0.0), abs=2e-3)


@settings(max_examples=40)
@given(st.floats(-0.99, 0.99), st.floats(0, np.pi), st.floats(5, 60))
def test_chord_offset_bisection(frac, phi, r):
    d = frac * r
    dx, dy = np.cos(phi), np.sin(phi)
    # start 200 mm behind the line's closest approach at perpendicular offset d
    px = -dy * d - 200 * dx
    py = dx * d - 200 * dy
    got = float(chord_lengths(Ellipse(0.0, 0.0, r, r, 0.3, 1.0), px, py, dx, dy))
    assert got == pytest.approx(chord_bisection(0.0, 0.0, r, px, py, dx, dy), abs=1e-6)


def test_rotated_ellipse_chord():
    # axis-aligned ray through a 90 degree rotated ellipse sees the other semi-axis
    e = Ellipse(0.0, 0.0, 40.0, 10.0, np.pi / 2, 1.0)
    assert ellipse_line_integral(e, Ray(-100.0, 0.0, 1.0, 0.0)) == pytest.approx(20.0, rel=1e-12)


@pytest.fixture(scope="module")
def sgs_cfg():
    return SgsPhantomConfig(rotation_subset=(0, 50, 100, 150, 199), view_stride=8)


def test_sinogram_properties(sgs_cfg):
    s = sinogram(sgs_cfg, 0)
    assert s.shape == (128, 999)
    assert s.min() >= 0
    st_ = sinogram_stats(sgs_cfg)
    assert 8.5 <= st_["max_mu_l"] <= 9.0
    assert abs(st_["zero_fraction"] - 0.165) < 0.01


def test_sgs_records(sgs_cfg):
    r = sgs_rotation(sgs_cfg, 170, seed=4)
    assert len(r) == 128 * 333
    assert np.all(r["split"] == 1)
    assert np.all(sgs_rotation(sgs_cfg, 3, 4)["split"] == 0)
    assert np.all(sgs_rotation(sgs_cfg, 190, 4)["split"] == 2)
    assert np.all(np.diff(r["bundle_index"].astype(np.int64)) > 0)
    x = r["x_true"]
    assert x.min() >= 0 and x.max() <= 9.2
    x2 = x[:, 1].reshape(128, 333)
    a, b = x2[:, :-1].ravel(), x2[:, 1:].ravel()
    assert np.corrcoef(a, b)[0, 1] > 0.99


def test_sgs_deterministic(tmp_path, sgs_cfg):
    write_sgs(sgs_cfg, 7, tmp_path / "a.bin")
    write_sgs(sgs_cfg, 7, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    r = DatasetReader(tmp_path / "a.bin")
    assert r.header.ordered and r.header.per_row == 333
    assert len(r) == 5 * 128 * 333
    first = next(generate_sgs(sgs_cfg, 7))
    assert first.tobytes() == r.read(0, 128 * 333).tobytes()
