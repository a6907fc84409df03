import numpy as np
import pytest

from neurohand.errors import InvalidArgument, ParseError
from neurohand.fingertips import (
    EXCLUSION_RADIUS,
    FocusRegion,
    HierarchyConfig,
    HierarchyModel,
    detect,
    error_table,
    fingertip_template,
    focus_region,
    fuse_streams,
    fusion_streams,
    local_features,
    overlay,
    tip_errors,
    train_hierarchy,
)
from neurohand.hand import FINGER_NAMES, HandGeometry, HandPose, generate_dataset, render_hand, tip_labels
from neurohand.llm import TrainConfig

SMALL = HierarchyConfig(global_train=TrainConfig(k=1, ridge=0.1, epochs=2),
                        local_train=TrainConfig(k=2, ridge=0.1, epochs=2), local_copies=2)


@pytest.fixture(scope="module")
def trained():
    records = generate_dataset(60, seed=5)
    return train_hierarchy(records[:48], SMALL), records


def test_template_shape_and_symmetry():
    t = fingertip_template()
    assert t.shape == (5, 5)
    assert abs(t.sum()) < 1e-12
    assert abs(np.sqrt((t * t).sum()) - 1.0) < 1e-12
    assert np.array_equal(t, t[:, ::-1])


def test_focus_region_clamped_inside_image():
    for est in [(0.0, 0.0), (63.0, 63.0), (-5.0, 80.0), (30.2, 31.7)]:
        r = focus_region(0, est, 12, (64, 64))
        x0, y0, x1, y1 = r.bounds
        assert 0 <= x0 and 0 <= y0 and x1 <= 63 and y1 <= 63
        assert r.crop(np.zeros((64, 64))).shape == (25, 25)
    with pytest.raises(InvalidArgument):
        focus_region(0, (0, 0), 40, (64, 64))


def test_training_is_deterministic(trained):
    model, records = trained
    again = train_hierarchy(records[:48], SMALL)
    assert again.digest() == model.digest()
    with pytest.raises(InvalidArgument):
        train_hierarchy([], SMALL)


def test_model_serialization_round_trip(trained):
    model, records = trained
    back = HierarchyModel.from_bytes(model.to_bytes())
    assert back.digest() == model.digest()
    d1, d2 = detect(model, records[50].image), detect(back, records[50].image)
    assert np.array_equal(d1.refined.xy, d2.refined.xy)
    with pytest.raises(ParseError):
        HierarchyModel.from_bytes(b"XXXX" + model.to_bytes()[4:])


def test_detect_contracts(trained):
    model, records = trained
    for r in records[48:]:
        det = detect(model, r.image)
        for region, tip in zip(det.regions, det.refined.xy):
            assert region.contains(tip)
            assert np.all((tip >= 0) & (tip <= 63))
    zero = np.zeros((64, 64))
    a, b = detect(model, zero), detect(model, zero)
    assert np.array_equal(a.refined.xy, b.refined.xy)
    with pytest.raises(InvalidArgument):
        detect(model, np.zeros((32, 64)))


def test_local_input_outside_region_is_ignored(trained):
    model, records = trained
    img = records[50].image.copy()
    det = detect(model, img)
    # perturbing pixels outside every focus region leaves the local outputs unchanged
    mask = np.ones_like(img, dtype=bool)
    for reg in det.regions:
        x0, y0, x1, y1 = reg.bounds
        mask[y0:y1 + 1, x0:x1 + 1] = False
    noisy = img.copy()
    noisy[mask] = 0.5
    for reg in det.regions:
        assert np.array_equal(local_features(img, reg, model.config), local_features(noisy, reg, model.config))


def test_error_table_format(trained):
    model, records = trained
    dets = [detect(model, r.image) for r in records[48:]]
    coarse, refined = tip_errors(dets, records[48:])
    assert coarse.shape == refined.shape == (12, 5)
    text = error_table(coarse, refined, FINGER_NAMES)
    assert len(text.splitlines()) == 7 and text.splitlines()[-1].startswith("all")


def _region_for(rng):
    records = generate_dataset(1, seed=int(rng.integers(1 << 30)))
    r = records[0]
    f = int(rng.integers(5))
    est = r.tips.xy[f] + rng.normal(0, 1.0, 2)
    region = focus_region(f, est, 12, (64, 64))
    return r.image, region, region.clip(est)


def test_fused_map_is_product_of_streams(rng):
    for _ in range(10):
        img, region, est = _region_for(rng)
        res = fuse_streams(img, region, est)
        s1, s2, s3 = fusion_streams(img, region, est, 2.0)
        brute = np.empty_like(res.fused)
        for y in range(brute.shape[0]):
            for x in range(brute.shape[1]):
                brute[y, x] = s1[y, x] * s2[y, x] * s3[y, x]
        assert np.max(np.abs(res.fused - brute)) <= 1e-9
        assert np.all(res.fused <= np.minimum(np.minimum(s1, s2), s3) + 1e-15)
        assert np.all(res.fused[(s1 == 0) | (s2 == 0) | (s3 == 0)] == 0)
        for s in (s1, s2, s3):
            assert s.min() >= 0 and s.max() <= 1


def test_candidates_distinct_and_ordered(rng):
    for _ in range(10):
        img, region, est = _region_for(rng)
        res = fuse_streams(img, region, est)
        assert res.best_confidence >= res.alternative_confidence
        assert np.linalg.norm(res.best - res.alternative) >= EXCLUSION_RADIUS
        assert region.contains(res.best) and region.contains(res.alternative)
        assert res.best_confidence == res.fused.max()


def test_fusion_invariant_to_affine_intensity(rng):
    img, region, est = _region_for(rng)
    a = fuse_streams(img, region, est).fused
    b = fuse_streams(3.5 * img + 0.25, region, est).fused
    assert np.allclose(a, b, atol=1e-12)


def test_fusion_rejects_estimate_outside_region():
    region = FocusRegion(0, 20, 20, 5)
    with pytest.raises(InvalidArgument):
        fuse_streams(np.zeros((64, 64)), region, (40.0, 40.0))


def test_single_finger_best_candidate_near_tip(rng):
    for _ in range(10):
        f = int(rng.integers(5))
        lengths = [(0.0, 0.0, 0.0)] * 5
        lengths[f] = HandGeometry().lengths[f]
        geom = HandGeometry(lengths=tuple(lengths))
        v = np.zeros((5, 2))
        # extended fingers: a strongly curled tip projects onto its own finger
        v[f] = rng.uniform(-0.25, 0.25), rng.uniform(0, 0.6)
        pose = HandPose.from_vector(v)
        img = render_hand(geom, pose)
        tip = tip_labels(geom, pose).xy[f]
        region = focus_region(f, tip, 12, (64, 64))
        res = fuse_streams(img, region, tip)
        assert np.linalg.norm(res.best - tip) <= 2.0


def test_overlay_marks(rng):
    img, region, est = _region_for(rng)
    res = fuse_streams(img, region, est)
    rgb = overlay(img, [res])
    assert rgb.shape == (64, 64, 3)
    bx, by = res.best.astype(int)
    assert tuple(rgb[by - 1, bx]) == (1.0, 0.0, 0.0)


def test_zero_image_follows_winner_affine_maps(trained):
    model, _ = trained
    det = detect(model, np.zeros((64, 64)))
    g = model.global_net
    w = int(np.argmin(((g.centers) ** 2).sum(axis=1)))  # all jets vanish on a blank image
    coarse = (g.offsets[w] - g.maps[w] @ g.centers[w]).reshape(5, 2)
    assert np.allclose(det.coarse.xy, coarse, atol=1e-9)
    for f, net in enumerate(model.local_nets):
        region = focus_region(f, coarse[f], model.config.half_size, model.config.size)
        k = int(np.argmin((net.centers ** 2).sum(axis=1)))
        local = net.offsets[k] - net.maps[k] @ net.centers[k]
        assert np.allclose(det.refined.xy[f], region.clip(np.array([region.cx, region.cy]) + local), atol=1e-9)
