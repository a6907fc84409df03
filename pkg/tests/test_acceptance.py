"""Acceptance criteria, one test each.

Every test records a ``ACCEPTANCE <n> PASS|FAIL`` line; pytest prints them in
its terminal summary, and ``python3 tests/test_acceptance.py`` prints them
directly.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from neurohand import attention, grasp
from neurohand.fingertips import detect, focus_region, fuse_streams, fusion_streams, tip_errors, train_hierarchy
from neurohand.hand import HandGeometry, HandPose, JointLimits, dataset_digest, generate_dataset, render_hand, tip_labels
from neurohand.imaging import gaussian_smooth
from neurohand.psom import dump_manifolds, fit_all, lagrange_weights, psom_forward, psom_inverse, reconstruct_posture

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SEED = 2024
N_IMAGES = 300
N_TRAIN = 240

RESULTS = {}


def report(n, ok, detail):
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    return ok


def hierarchy_run(seed=SEED):
    t0 = time.perf_counter()
    records = generate_dataset(N_IMAGES, seed=seed)
    model = train_hierarchy(records[:N_TRAIN])
    held = records[N_TRAIN:]
    dets = [detect(model, r.image) for r in held]
    return records, model, dets, time.perf_counter() - t0


@pytest.fixture(scope="module")
def trained():
    return hierarchy_run()


def test_1_hierarchy_improvement(trained):
    records, _, dets, elapsed = trained
    coarse, refined = tip_errors(dets, records[N_TRAIN:])
    frac = float((refined.mean(axis=1) < coarse.mean(axis=1)).mean())
    ok = refined.mean() < coarse.mean() and frac >= 0.7 and elapsed <= 300 and coarse.mean() < 8
    assert report(1, ok, f"held-out mean error global {coarse.mean():.3f} px, refined {refined.mean():.3f} px; "
                         f"refined better on {frac:.0%} of images; {elapsed:.1f} s")


def test_2_fusion_correctness():
    rng = np.random.default_rng(SEED)
    worst_product = 0.0
    for _ in range(10):
        r = generate_dataset(1, seed=int(rng.integers(1 << 30)))[0]
        f = int(rng.integers(5))
        region = focus_region(f, r.tips.xy[f] + rng.normal(0, 1, 2), 12, (64, 64))
        est = region.clip(r.tips.xy[f] + rng.normal(0, 1, 2))
        res = fuse_streams(r.image, region, est)
        s = fusion_streams(r.image, region, est, 2.0)
        brute = np.array([[s[0][y, x] * s[1][y, x] * s[2][y, x] for x in range(s[0].shape[1])]
                          for y in range(s[0].shape[0])])
        worst_product = max(worst_product, float(np.max(np.abs(res.fused - brute))))
    worst_tip = 0.0
    for _ in range(10):
        f = int(rng.integers(5))
        lengths = [(0.0, 0.0, 0.0)] * 5
        lengths[f] = HandGeometry().lengths[f]
        geom = HandGeometry(lengths=tuple(lengths))
        v = np.zeros((5, 2))
        v[f] = rng.uniform(-0.25, 0.25), rng.uniform(0.0, 0.6)  # extended: the tip is visible
        pose = HandPose.from_vector(v)
        tip = tip_labels(geom, pose).xy[f]
        res = fuse_streams(render_hand(geom, pose), focus_region(f, tip, 12, (64, 64)), tip)
        worst_tip = max(worst_tip, float(np.linalg.norm(res.best - tip)))
    ok = worst_product <= 1e-9 and worst_tip <= 2.0
    assert report(2, ok, f"fused vs brute-force product max diff {worst_product:.1e}; "
                         f"worst best-candidate distance {worst_tip:.2f} px")


def test_3_psom_exactness_and_inversion():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    manifolds = fit_all()
    node_err = max(float(np.max(np.abs(psom_forward(m, (i, j)) - m.embeddings[i, j])))
                   for m in manifolds for i in range(4) for j in range(4))
    trip = 0.0
    for _ in range(100):
        m = manifolds[int(rng.integers(5))]
        s0 = rng.uniform(0.1, 2.9, 2)
        trip = max(trip, float(np.max(np.abs(psom_inverse(m, psom_forward(m, s0)[:2]).s - s0))))
    t = np.linspace(0, 3, 301)
    w = lagrange_weights(t)
    oracle = 0.0
    for _ in range(20):
        m = manifolds[int(rng.integers(5))]
        obs = rng.uniform(0, 63, 2)
        surf = np.einsum("ai,bj,ijc->abc", w, w, m.embeddings)[..., :2]
        grid = float((((surf - obs) / m.scale[:2]) ** 2).sum(axis=-1).min())
        oracle = max(oracle, abs(psom_inverse(m, obs).residual - grid))
    elapsed = time.perf_counter() - t0
    ok = node_err <= 1e-12 and trip < 1e-3 and oracle <= 1e-3 and elapsed <= 30
    assert report(3, ok, f"node error {node_err:.1e}; round trip max {trip:.1e}; "
                         f"grid-oracle gap {oracle:.1e}; {elapsed:.1f} s")


def test_4_joint_coupling():
    rng = np.random.default_rng(SEED)
    lim = JointLimits()
    bad = 0
    for _ in range(10_000):
        pose = HandPose.from_vector(np.column_stack([rng.uniform(-lim.phi_max, lim.phi_max, 5),
                                                     rng.uniform(0, lim.theta_max, 5)]))
        j = pose.joints()
        theta = np.asarray(pose.theta)
        bad += not (np.array_equal(j[:, 0], theta) and np.array_equal(j[:, 1], theta)
                    and np.array_equal(j[:, 2], theta * 2.0 / 3.0))
    assert report(4, bad == 0, f"{bad} of 10000 expanded poses violate the coupling rule")


def test_5_end_to_end_reconstruction(trained):
    records, _, dets, _ = trained
    manifolds = fit_all()
    held = records[N_TRAIN:N_TRAIN + 50]
    errs = []
    for r, d in zip(held, dets):
        res = reconstruct_posture(manifolds, d.refined)
        errs.append(np.abs(res.parameters - r.pose.vector()))
    errs = np.array(errs)
    mae = float(np.nanmean(errs))
    detail = (f"pose MAE {mae:.4f} rad over {len(held)} held-out images "
              f"(phi {np.nanmean(errs[:, 0::2]):.4f}, theta {np.nanmean(errs[:, 1::2]):.4f}); target 0.01")
    assert report(5, mae <= 1e-2, detail)


def test_6_attention_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    homog = True
    for _ in range(50):
        shape = (32, 32)
        maps = {k: rng.random(shape) for k in attention.BASE_MAPS}
        weights = {k: float(rng.uniform(0, 2)) for k in attention.BASE_MAPS}
        c = float(rng.uniform(0.1, 10))
        state = attention.AttentionState.fresh(shape)
        a = attention.integrate(attention.FeatureStack(maps, weights), state)
        b = attention.integrate(attention.FeatureStack(maps, {k: c * v for k, v in weights.items()}), state)
        homog &= int(np.argmax(a)) == int(np.argmax(b))

    sc = attention.load_scenario(SCENARIOS / "pointing.txt")
    ep = attention.run_episode(sc)
    p = sc.pointings[0]
    support = gaussian_smooth(attention.pointing_cone((sc.height, sc.width), (p.ox, p.oy), (p.dx, p.dy),
                                                      p.aperture), 2.0) > 0
    confined = all(f is None or support[f.raw[1], f.raw[0]] for f in ep.fixations)

    cfg = attention.AttentionConfig()
    fix = attention.run_episode(attention.load_scenario(SCENARIOS / "two_blobs.txt"), cfg).fixations
    no_revisit = all(a is None or b is None or math.dist(a.point, b.point) >= 2 * cfg.inhibition_sigma
                     for a, b in zip(fix, fix[1:]))

    boost, eps = 0.8, 1e-6
    n = attention.steps_to_settle(boost, cfg.decay, eps)
    st_ = attention.AttentionState.fresh((2, 2))
    defaults = cfg.weights()
    attention.apply_color_bias(st_, "blue", boost)
    excess = []
    for _ in range(n):
        attention.decay_bias(st_)
        excess.append(attention.biased_weights(defaults, st_, cfg.decay)["blue"] - defaults["blue"])
    exact = n == math.ceil(math.log(eps / boost) / math.log(cfg.decay)) and excess[-1] <= eps and excess[-2] > eps
    elapsed = time.perf_counter() - t0
    ok = homog and confined and no_revisit and exact and elapsed <= 30
    assert report(6, ok, f"homogeneity {homog}; cone confinement {confined}; no immediate revisit {no_revisit}; "
                         f"bias settles in exactly {n} steps {exact}; {elapsed:.1f} s")


def test_7_grasp_sequence():
    t0 = time.perf_counter()
    cfg = grasp.GraspConfig()
    tr = grasp.simulate(cfg)
    seq = tr.visited()[:4] == ["Rest", "Preshape", "Close", "Hold"] and tr.states[-1] == "Hold"
    eq = grasp.hold_equilibrium(cfg.gain, cfg.hold_weight, cfg.force_setpoint, cfg.deadband)
    dev = float(np.max(np.abs(tr.force[-1] - eq)) / eq)
    try:
        valid = grasp.validate_trace(tr.states)
    except Exception:
        valid = False
    elapsed = time.perf_counter() - t0
    ok = seq and dev <= 0.01 and valid and elapsed <= 10
    assert report(7, ok, f"states {' -> '.join(tr.visited())}; Hold force {tr.force[-1].mean():.4f} N vs "
                         f"equilibrium {eq:.4f} N ({dev:.2%}); trace valid {valid}; {elapsed:.1f} s")


def _artifacts(seed):
    records, model, dets, _ = hierarchy_run(seed)
    manifolds = fit_all()
    recon = [reconstruct_posture(manifolds, d.refined) for d in dets[:10]]
    episodes = [attention.trace_csv(attention.run_episode(attention.load_scenario(p)).fixations)
                for p in sorted(SCENARIOS.glob("*.txt"))]
    return {
        "dataset": dataset_digest(records).encode(),
        "model": model.to_bytes(),
        "detections": b"".join(d.refined.xy.tobytes() for d in dets),
        "manifolds": dump_manifolds(manifolds),
        "reconstruction": b"".join(r.parameters.tobytes() + r.depths.tobytes() for r in recon),
        "attention": "".join(episodes).encode(),
        "grasp": grasp.simulate(grasp.GraspConfig()).to_csv().encode(),
    }


def test_8_determinism(trained):
    records, model, dets, _ = trained
    first = _artifacts(SEED)
    second = _artifacts(SEED)
    same = [k for k in first if first[k] == second[k]]
    matches_fixture = first["model"] == model.to_bytes()
    ok = len(same) == len(first) and matches_fixture
    assert report(8, ok, f"{len(same)} of {len(first)} artifact kinds byte-identical across repeated runs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
