import io

import numpy as np
import pytest

from conftest import jpeg_bytes, textured
from gfrkit.errors import ConfigError, FormatError, MismatchedProvenance
from gfrkit.features import (FeatureMatrix, FeatureParams, MergedSet, PhaseHistogramGrid,
                             centro_classes, dctr_classes, expected_dim, extract, features_to_csv,
                             layout, layout_hash, merge_centro, merge_dctr_style,
                             merge_mirror_pairs, merge_transpose, orientation_classes,
                             read_features, write_features)
from gfrkit.jpeg import parse_jpeg

Q4 = (2.0, 4.0, 6.0, 8.0)
Q6 = Q4 + (10.0, 12.0)


def brute_orbits(maps):
    """Connected components of the phase grid under the given maps, by union-find."""
    parent = {(a, b): (a, b) for a in range(8) for b in range(8)}

    def find(p):
        while parent[p] != p:
            p = parent[p]
        return p
    for p in list(parent):
        for f in maps:
            parent[find(p)] = find(f(*p))
    groups = {}
    for p in parent:
        groups.setdefault(find(p), []).append(p)
    return sorted(tuple(sorted(g)) for g in groups.values())


def test_class_counts():
    assert len(dctr_classes()) == 25
    assert len(centro_classes()) == 34


def test_classes_match_union_find():
    neg_a = lambda a, b: ((-a) % 8, b)  # noqa: E731
    neg_b = lambda a, b: (a, (-b) % 8)  # noqa: E731
    both = lambda a, b: ((-a) % 8, (-b) % 8)  # noqa: E731
    assert sorted(dctr_classes()) == brute_orbits([neg_a, neg_b])
    assert sorted(centro_classes()) == brute_orbits([both])


def test_class_partition_and_fixed_points():
    for classes in (dctr_classes(), centro_classes()):
        members = [p for c in classes for p in c]
        assert sorted(members) == [(a, b) for a in range(8) for b in range(8)]
    singles = sorted(c[0] for c in centro_classes() if len(c) == 1)
    assert singles == [(0, 0), (0, 4), (4, 0), (4, 4)]
    assert ((1, 2), (1, 6), (7, 2), (7, 6)) in dctr_classes()
    assert ((1, 3), (7, 5)) in centro_classes()


def test_class_order_by_smallest_member():
    for classes in (dctr_classes(), centro_classes()):
        reps = [c[0] for c in classes]
        assert reps == sorted(reps)


def grid(seed, k, phi=0.0, sigma=1.0, T=4):
    h = np.random.default_rng(seed).random((8, 8, T + 1))
    return PhaseHistogramGrid(h / h.sum(-1, keepdims=True), phi, sigma, k)


def test_merge_dctr_averages():
    g = grid(1, 0)
    m = merge_dctr_style(g)
    i = m.classes.index(((1, 2), (1, 6), (7, 2), (7, 6)))
    want = (g.hist[1, 2] + g.hist[1, 6] + g.hist[7, 2] + g.hist[7, 6]) / 4
    np.testing.assert_allclose(m.hist[i], want, atol=1e-15)
    np.testing.assert_allclose(m.hist.sum(-1), 1, atol=1e-12)


def test_merge_dctr_strict_rejects_oblique():
    with pytest.raises(MismatchedProvenance):
        merge_dctr_style(grid(1, 5))
    assert merge_dctr_style(grid(1, 5), strict=False).hist.shape == (25, 5)


def test_merge_centro():
    g = grid(2, 3)
    m = merge_centro(g)
    i = m.classes.index(((1, 3), (7, 5)))
    np.testing.assert_allclose(m.hist[i], (g.hist[1, 3] + g.hist[7, 5]) / 2, atol=1e-15)


def test_merge_mirror_pairs():
    g, h = grid(3, 5), grid(4, 27)
    m = merge_mirror_pairs(g, h)
    i = m.classes.index(((1, 3), (7, 5)))
    # class (1,3),(7,5): own (1,3),(7,5) and mirror (7,3),(1,5), each pair averaged, then the class
    a = (g.hist[1, 3] + g.hist[7, 5] + h.hist[7, 3] + h.hist[1, 5]) / 4
    b = (g.hist[7, 5] + g.hist[1, 3] + h.hist[1, 5] + h.hist[7, 3]) / 4
    np.testing.assert_allclose(m.hist[i], (a + b) / 2, atol=1e-15)
    assert m.orients == frozenset({5, 27})


@pytest.mark.parametrize("k,m", [(5, 26), (0, 32), (16, 16), (20, 12)])
def test_merge_mirror_rejects_wrong_pairs(k, m):
    with pytest.raises(MismatchedProvenance):
        merge_mirror_pairs(grid(3, k), grid(4, m % 64))


def test_merge_mirror_rejects_scale_mismatch():
    with pytest.raises(MismatchedProvenance):
        merge_mirror_pairs(grid(3, 5, sigma=1.0), grid(4, 27, sigma=0.5))


def test_merge_transpose():
    s1 = merge_centro(grid(5, 0))
    s2 = merge_centro(grid(6, 16))
    m = merge_transpose(s1, s2)
    i = s1.classes.index(((1, 3), (7, 5)))
    j = s1.classes.index(((3, 1), (5, 7)))
    np.testing.assert_allclose(m.hist[i], (s1.hist[i] + s2.hist[j]) / 2, atol=1e-15)
    with pytest.raises(MismatchedProvenance):
        merge_transpose(s1, merge_centro(grid(6, 15)))
    with pytest.raises(MismatchedProvenance):
        merge_transpose(s1, MergedSet(s2.hist, s2.classes, 0.0, 2.0, s2.orients))


@pytest.mark.parametrize("variant,L,dim", [("gfr", 4, 17000), ("gfr-gsm", 4, 11880),
                                           ("gfr-gw", 6, 17820), ("gfr-gw", 4, 11880)])
def test_expected_dims(variant, L, dim):
    assert expected_dim(variant, L, 4) == dim


@pytest.mark.parametrize("L", [1, 2, 5])
@pytest.mark.parametrize("T", [1, 3, 6])
def test_dim_closed_form(L, T):
    # (1 * 25 + 8 * 34) classes per (phi, sigma), two phases
    assert expected_dim("gfr-gsm", L, T) == 2 * L * (25 + 8 * 34) * (T + 1) == 594 * L * (T + 1)
    assert expected_dim("gfr", L, T) == 2 * L * 17 * 25 * (T + 1)


@pytest.mark.parametrize("variant", ["gfr", "gfr-gsm", "gfr-gw"])
def test_layout_consistent(variant):
    p = FeatureParams(variant, q=Q4 if variant != "gfr-gw" else Q6)
    lay = layout(p)
    assert len(lay) == expected_dim(variant, p.L, p.T)
    assert len(set(lay)) == len(lay)
    assert list(lay) == sorted(lay, key=lambda d: (d[0], p.scales.index(d[1]), d[2], d[3], d[4]))


def test_orientation_classes_cover_all():
    for variant in ("gfr", "gfr-gw"):
        oc = orientation_classes(variant)
        assert set().union(*oc) == set(range(32))
        assert sum(len(c) for c in oc) == 32


def test_layout_hash_tracks_params():
    a = layout_hash(FeatureParams("gfr-gw", q=Q6))
    assert a == layout_hash(FeatureParams("gfr-gw", q=Q6))
    assert a != layout_hash(FeatureParams("gfr-gw", q=Q6, p_center=0.8))
    assert a != layout_hash(FeatureParams("gfr-gsm", scales=(0.5, 0.75, 1, 1.25, 1.5, 1.75), q=Q6))
    # p_center is irrelevant without weighting
    assert layout_hash(FeatureParams("gfr-gsm", q=Q4)) == layout_hash(FeatureParams("gfr-gsm", q=Q4, p_center=0.8))


def test_param_errors():
    with pytest.raises(ConfigError):
        FeatureParams("dctr")
    with pytest.raises(ConfigError):
        FeatureParams("gfr", q=(1, 2))
    with pytest.raises(ConfigError):
        FeatureParams("gfr", q=Q4, qf=75)
    with pytest.raises(ConfigError):
        FeatureParams("gfr").q_schedule(90)
    assert FeatureParams("gfr-gw").q_schedule(95) == (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)


@pytest.fixture(scope="module")
def plane():
    return textured((64, 72), 11).astype(np.float64)


@pytest.mark.parametrize("variant", ["gfr", "gfr-gsm", "gfr-gw"])
def test_extract_dim_and_range(plane, variant):
    p = FeatureParams(variant, scales=(0.5, 1.0), q=(2.0, 6.0))
    fv = extract(plane, p)
    assert fv.values.shape == (expected_dim(variant, 2, 4),)
    assert np.all(fv.values >= -1e-15) and np.all(fv.values <= 1 + 1e-12)
    # every merged histogram is a mixture of normalized histograms
    np.testing.assert_allclose(fv.values.reshape(-1, 5).sum(-1), 1, atol=1e-9)
    assert fv.layout_hash == layout_hash(fv.params)


def test_constant_image_all_mass_in_bin_zero():
    fv = extract(np.full((40, 40), 97.0), FeatureParams("gfr-gsm", scales=(1.0,), q=(4.0,)))
    v = fv.values.reshape(-1, 5)
    np.testing.assert_allclose(v[:, 0], 1, atol=1e-12)


def test_deterministic(plane):
    p = FeatureParams("gfr-gw", scales=(0.75,), q=(4.0,))
    assert np.array_equal(extract(plane, p).values, extract(plane, p).values)


@pytest.mark.parametrize("variant", ["gfr", "gfr-gsm", "gfr-gw"])
def test_flip_invariance(plane, variant):
    p = FeatureParams(variant, scales=(0.5, 1.25), q=(2.0, 6.0))
    a = extract(plane, p).values
    np.testing.assert_allclose(extract(plane[:, ::-1].copy(), p).values, a, atol=1e-12)
    np.testing.assert_allclose(extract(plane[::-1].copy(), p).values, a, atol=1e-12)


@pytest.mark.parametrize("variant", ["gfr-gsm", "gfr-gw"])
def test_transpose_invariance(plane, variant):
    p = FeatureParams(variant, scales=(0.75,), q=(4.0,))
    a = extract(plane, p).values
    np.testing.assert_allclose(extract(plane.T.copy(), p).values, a, atol=1e-12)


def test_gfr_not_transpose_invariant(plane):
    p = FeatureParams("gfr", scales=(0.75,), q=(4.0,))
    assert np.abs(extract(plane.T.copy(), p).values - extract(plane, p).values).max() > 1e-6


def test_jpeg_input_uses_quality_hint():
    jpg = parse_jpeg(jpeg_bytes(textured((48, 48), 2), quality=75))
    fv = extract(jpg, FeatureParams("gfr-gsm", scales=(0.5, 1.0)))
    assert fv.params.q == (2.0, 6.0)
    with pytest.raises(ConfigError):
        extract(parse_jpeg(jpeg_bytes(textured((48, 48), 2), quality=85)), FeatureParams("gfr-gsm"))


def test_feature_file_roundtrip():
    rng = np.random.default_rng(0)
    fm = FeatureMatrix(rng.random((3, 7)).astype(np.float32), "gfr-gsm", bytes(range(32)),
                       {"rows": ["a", "b", "c"]})
    buf = io.BytesIO()
    write_features(buf, fm)
    buf.seek(0)
    back = read_features(buf)
    assert np.array_equal(back.values, fm.values)
    assert (back.variant, back.layout_hash, back.meta) == (fm.variant, fm.layout_hash, fm.meta)
    raw = buf.getvalue()
    with pytest.raises(FormatError):
        read_features(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(FormatError):
        read_features(io.BytesIO(raw[:-3]))


def test_csv_matches_values():
    fm = FeatureMatrix(np.array([[0.25, 0.5], [1.0, 0.0]], np.float32), "gfr", bytes(32))
    text = features_to_csv(fm, ["x", "y"])
    assert text.splitlines() == ["x,0.25,0.5", "y,1.0,0.0"]
