"""The ten acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line in the terminal summary.  Criteria 8-10
train at desk scale (8000 records, 1500 epochs) and take most of the run
time; they share one generated dataset.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import central_diff, max_rel_err, record_acceptance
from test_metrics import ami_oracle, ari_oracle, set_partitions
from dynbeta import clustering, pipeline
from dynbeta.controller import ControllerHyper, ControllerState, Deltas, beta_increment, update_beta
from dynbeta.metrics import ami, ari
from dynbeta.signal import (
    N_BINS,
    SAMPLE_RATE,
    SEGMENT_LENGTH,
    TimeSeriesRecording,
    default_profiles,
    generate_dataset,
    n_retained_bins,
    welch_psd,
)
from dynbeta.vae import ModelParams, kld_loss, loss_and_grads, recon_loss, total_loss

HYPER = ControllerHyper(a=0.2, b=0.05, w1=1.2, w2=1.2, w3=0.9, w4=1.1)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# --- 1 ----------------------------------------------------------------------

def test_criterion_01_controller_hand_cases():
    with Timer() as t:
        def st(beta, min_rec, min_reg, ref):
            return ControllerState(beta=beta, min_rec=min_rec, min_reg=min_reg, rec_at_last_change=ref)

        # d_rec = 0.3 > 0, d_reg = -0.4 < 0, dL = 0
        dec = update_beta(st(0.5, 1.0, 1.0, 1.5), 1.5, 0.8, HYPER).beta
        # d_rec < 0, d_reg > 0, dL = sgn(9 - 9) + sgn(9 - 11) = -1
        inc = update_beta(st(0.5, 10.0, 1.0, 10.0), 9.0, 1.5, HYPER).beta
        # both deltas positive
        same = update_beta(st(0.5, 1.0, 1.0, 1.5), 1.5, 1.5, HYPER).beta
        direct = [0.5 + beta_increment(Deltas(*d), HYPER) for d in ((0.3, -0.4, 0), (-0.1, 0.1, -1), (0.3, 0.3, 0))]
    errs = [abs(dec - 0.45), abs(inc - 0.8), abs(same - 0.5)] + [
        abs(a - b) for a, b in zip(direct, (0.45, 0.8, 0.5))
    ]
    ok = max(errs) <= 1e-12 and t.seconds < 1
    record_acceptance(1, ok, f"beta 0.5 -> {dec:.15g} / {inc:.15g} / {same:.15g}; max err {max(errs):.1e}; {t.seconds:.3f}s")
    assert ok


# --- 2 ----------------------------------------------------------------------

def test_criterion_02_both_deltas_negative():
    rng = np.random.default_rng(2)
    bad, negatives = 0, 0
    with Timer() as t:
        for _ in range(10_000):
            beta = float(rng.uniform(0, 3))
            min_rec, min_reg = float(rng.uniform(0.5, 100)), float(rng.uniform(0.01, 10))
            l_rec = min_rec * float(rng.uniform(0.5, 1.19))  # below w1 * min
            l_reg = min_reg * float(rng.uniform(0.5, 1.19))
            # reference placed so each dL value is hit
            ref = l_rec / float(rng.choice([0.5, 0.9, 1.0, 1.0 / 1.1, 2.0]))
            state = ControllerState(beta=beta, min_rec=min_rec, min_reg=min_reg, rec_at_last_change=ref)
            new = update_beta(state, l_rec, l_reg, HYPER)
            lo, hi = l_rec - 0.9 * ref, l_rec - 1.1 * ref
            dl = (lo > 0) - (lo < 0) + (hi > 0) - (hi < 0)
            expected = max(0.0, beta - (HYPER.a + HYPER.b) * dl / 2)
            bad += new.beta != expected
            negatives += new.beta < 0
    ok = bad == 0 and negatives == 0 and t.seconds < 5
    record_acceptance(2, ok, f"10^4 states: {bad} mismatches, {negatives} negative betas; {t.seconds:.2f}s")
    assert ok


# --- 3 ----------------------------------------------------------------------

def _composite_gradcheck(beta, gamma, seed=0):
    rng = np.random.default_rng(seed)
    params = ModelParams.init(seed, input_width=8, encoder_widths=(4, 4), decoder_widths=(4, 8))
    arrays = [a + rng.normal(0, 0.05, a.shape) for a in params.flat()]
    x = rng.uniform(0.05, 0.95, (4, 8))
    noise = rng.standard_normal((4, 2))
    labelled = (rng.uniform(0.05, 0.95, (6, 8)), np.array([0, 0, 1, 1, 2, 2])) if gamma > 0 else None

    def f():
        return total_loss(loss_and_grads(params.with_flat(arrays), x, noise, beta, gamma, labelled)[0], beta, gamma)

    _, grads = loss_and_grads(params.with_flat(arrays), x, noise, beta, gamma, labelled)
    return max_rel_err(grads, central_diff(f, arrays))


def test_criterion_03_gradients():
    with Timer() as t:
        errs = {(b, g): _composite_gradcheck(b, g) for b in (0.0, 0.5, 1.0) for g in (0.0, 0.1)}
    worst = max(errs.values())
    ok = worst < 1e-4 and t.seconds < 30
    record_acceptance(3, ok, f"max rel err {worst:.1e} over 6 (beta, gamma) pairs; {t.seconds:.2f}s")
    assert ok


# --- 4 ----------------------------------------------------------------------

def test_criterion_04_loss_terms():
    with Timer() as t:
        kld = kld_loss(np.array([[1.0, 0.0]]), np.zeros((1, 2)))
        x = np.random.default_rng(4).random((3, N_BINS))
        bce = recon_loss(x, np.full_like(x, 0.5))
        Z = np.array([[0, 0], [2, 0], [0, 4], [0, 6]], dtype=float)
        cls = clustering.clustering_loss(Z, [0, 0, 1, 1], 1e-8).loss
        cls_hand = (4.0 + 1e-8) / (math.sqrt(26.0) + 1e-8)  # d_C = 1+1+1+1, d_R = |(1,0)-(0,5)|
    e = (abs(kld - 0.5), abs(bce - 193 * math.log(2)), abs(cls - cls_hand))
    ok = e[0] <= 1e-12 and e[1] <= 1e-9 and e[2] <= 1e-12 and t.seconds < 1
    record_acceptance(4, ok, f"KLD err {e[0]:.1e}, BCE err {e[1]:.1e}, L_cls err {e[2]:.1e}; {t.seconds:.3f}s")
    assert ok


# --- 5 ----------------------------------------------------------------------

def _panel():
    # one labeling per block-size profile of 8 points in at most 3 blocks
    shapes = [(8,), (7, 1), (6, 2), (5, 3), (4, 4), (6, 1, 1), (5, 2, 1), (4, 3, 1), (4, 2, 2), (3, 3, 2)]
    rng = np.random.default_rng(5)
    out = []
    for shape in shapes:
        labels = np.repeat(np.arange(len(shape)), shape)
        out.append(tuple(int(v) for v in rng.permutation(labels)))
    return out


def test_criterion_05_metric_oracles():
    partitions = list(set_partitions(8, 3))
    panel = _panel()
    with Timer() as t:
        worst_ari = worst_ami = 0.0
        for ref in panel:
            for p in partitions:
                o_ari = ari_oracle(list(ref), list(p))
                o_ami = ami_oracle(ref, p)
                worst_ari = max(worst_ari, abs(ari(ref, p) - o_ari), abs(ari(p, ref) - o_ari))
                worst_ami = max(worst_ami, abs(ami(ref, p) - o_ami), abs(ami(p, ref) - o_ami))
        identical = all(ari(p, p) == 1.0 for p in partitions)
    ok = len(partitions) == 1094 and worst_ari <= 1e-12 and worst_ami <= 1e-12 and identical and t.seconds < 60
    record_acceptance(
        5, ok,
        f"{len(partitions)} labelings x {len(panel)}-labeling panel: ARI err {worst_ari:.1e}, AMI err {worst_ami:.1e}, "
        f"ARI(p,p)=1 {identical}; {t.seconds:.1f}s",
    )
    assert ok


# --- 6 ----------------------------------------------------------------------

def _exhaustive_optimum(X, k):
    n = len(X)
    labels = np.array([(0,) + a for a in itertools.product(range(k), repeat=n - 1)])
    labels = labels[[len(set(r)) == k for r in labels]]
    onehot = labels[:, :, None] == np.arange(k)  # (L, n, k)
    counts = onehot.sum(1)  # (L, k)
    sums = np.einsum("lnk,nd->lkd", onehot, X)
    sq = (X**2).sum(1)
    # within-cluster SS = sum |x|^2 - sum_k |S_k|^2 / n_k
    return float((sq.sum() - ((sums**2).sum(2) / counts).sum(1)).min())


def test_criterion_06_clustering_oracles():
    with Timer() as t:
        hits = 0
        for seed in range(100):
            X = np.random.default_rng(seed).normal(size=(8, 2))
            k = 2 + seed % 2
            model = clustering.kmeans(X, k, seed, n_init=5)
            hits += model.inertia <= _exhaustive_optimum(X, k) + 1e-9
        monotone = True
        for seed in range(20):
            X = np.random.default_rng(1000 + seed).normal(size=(400, 2))
            h = np.array(clustering.kmeans(X, 8, seed).inertia_history)
            monotone &= bool((np.diff(h) <= 1e-12 * h[0]).all())
        blob_wins = 0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = np.concatenate([c + rng.normal(0, 0.5, (60, 2)) for c in ([0, 0], [10, 0], [0, 10])])
            blob_wins += clustering.select_k(X, 2, 10, seed).k == 3
    ok = hits >= 95 and monotone and blob_wins >= 4 and t.seconds < 60
    record_acceptance(
        6, ok,
        f"kmeans optimum on {hits}/100 i.i.d. Gaussian 8-point instances (need 95); "
        f"Lloyd monotone {monotone}; select_k=3 on {blob_wins}/5 seeds; {t.seconds:.1f}s",
    )
    assert ok


# --- 7 ----------------------------------------------------------------------

def test_criterion_07_signal():
    with Timer() as t:
        n_bins = n_retained_bins(SEGMENT_LENGTH, SAMPLE_RATE)
        top_hz = (n_bins - 1) * SAMPLE_RATE / SEGMENT_LENGTH
        t_axis = np.arange(SEGMENT_LENGTH * 4) / SAMPLE_RATE
        psd = welch_psd(TimeSeriesRecording(np.sin(2 * np.pi * 520.8333 * t_axis)))
        unl, lab = generate_dataset(default_profiles(), 50, 2, seed=7)
        maxima = np.concatenate([unl.bins.max(1), lab.bins.max(1)])
    ok = n_bins == 193 and psd.shape == (193,) and abs(top_hz - 2000) < 1e-9 and int(psd.argmax()) == 50
    ok = ok and bool((maxima == 1.0).all()) and t.seconds < 10
    record_acceptance(
        7, ok,
        f"{n_bins} bins up to {top_hz:.6g} Hz; 520.8333 Hz peaks at bin {int(psd.argmax())}; "
        f"{int((maxima == 1.0).sum())}/{maxima.size} spectra have max exactly 1; {t.seconds:.2f}s",
    )
    assert ok


# --- desk-scale runs (8-10) -------------------------------------------------

@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    cfg = pipeline.ExperimentConfig(out_dir=str(root / "run"))
    with Timer() as t:
        pipeline.cmd_generate(cfg)
    return cfg, root, t.seconds


@pytest.mark.slow
def test_criterion_08_non_collapse(desk):
    cfg, _, gen_s = desk
    ds = pipeline.load_dataset(cfg)
    with Timer() as t:
        result = pipeline.train_model(ds.unlabelled.bins, cfg, seed=0)
    first, last = result.trace[0], result.trace[-1]
    ok = len(result.trace) == 1500 and last.l_reg > 0.05 and last.l_rec < 0.5 * first.l_rec
    ok = ok and t.seconds + gen_s <= 2 * 3600
    record_acceptance(
        8, ok,
        f"{len(ds.unlabelled)} records, {len(result.trace)} epochs: final KLD {last.l_reg:.4f} nats (> 0.05), "
        f"L_rec {last.l_rec:.2f} vs epoch-0 {first.l_rec:.2f} ({last.l_rec / first.l_rec:.1%}); "
        f"final beta {last.beta:.3g}; {t.seconds / 60:.1f} min",
    )
    assert ok


@pytest.mark.slow
def test_criterion_09_directional_ordering(desk):
    cfg, root, _ = desk
    with Timer() as t:
        result = pipeline.cmd_compare(cfg, methods=["pca", "dynamic-beta-vae", "dynamic-beta-vae-semi"])
    by = {e["method"]: e for e in result["methods"]}
    aris = {m: [round(r["ari"], 3) for r in by[m]["runs"]] for m in by}
    order = result["ordering"]
    ok = bool(order.get("passed")) and all(by[m]["n_runs"] == 5 for m in by) and t.seconds <= 8 * 3600
    record_acceptance(
        9, ok,
        f"median ARI semi {order.get('semi_median_ari', float('nan')):.3f} >= unsup "
        f"{order.get('unsup_median_ari', float('nan')):.3f} >= PCA {order.get('pca_median_ari', float('nan')):.3f}, "
        f"gap {order.get('semi_minus_pca', float('nan')):.3f} (need 0.05); per-seed {json.dumps(aris)}; "
        f"{t.seconds / 60:.0f} min",
    )
    assert ok


@pytest.mark.slow
def test_criterion_10_reproducibility(desk):
    cfg, root, _ = desk
    outputs = []
    with Timer() as t:
        for rep in ("a", "b"):
            c = pipeline.ExperimentConfig(**{**cfg.to_dict(), "out_dir": str(root / f"repro_{rep}")})
            c.data_dir = str(pipeline.data_dir(cfg))
            run = pipeline.cmd_train(c, "dynamic-beta-vae", seed=0)
            pipeline.cmd_embed(run / "model.dbv", run / "test_spectra.csv", run / "embedding.csv")
            pipeline.cmd_evaluate(run / "embedding.csv", pipeline.data_dir(cfg) / "truth.csv", c, seed=0)
            outputs.append({n: (run / n).read_bytes() for n in ("trace.csv", "metrics.json", "model.dbv", "embedding.csv")})
    same = {n: outputs[0][n] == outputs[1][n] for n in outputs[0]}
    ok = same["trace.csv"] and same["metrics.json"]
    record_acceptance(
        10, ok,
        "byte-identical: " + ", ".join(f"{n} {v}" for n, v in same.items()) + f"; {t.seconds / 60:.1f} min",
    )
    assert ok
