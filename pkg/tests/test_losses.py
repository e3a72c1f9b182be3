import numpy as np
import pytest
import torch
import torch.nn.functional as F

from streamkd.losses import (LossBreakdown, as_breakdown, compose, derpp_loss,
                             er_loss, erace_loss, kl_distill, mkd_loss,
                             mkd_loss_single_view, snapshot_kd_loss)
from streamkd.model import build_model, clone_model
from streamkd.momentum_teacher import DistillConfig

N_CLASSES = 4


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@pytest.fixture
def student():
    torch.manual_seed(2)
    net = build_model("mlp", (1, 3, 3), N_CLASSES, hidden=(8,))
    net.eval()
    return net


@pytest.fixture
def teacher(student):
    twin = clone_model(student)
    with torch.no_grad():
        for p in twin.parameters():
            p.add_(torch.randn_like(p) * 0.3)
    return twin


def _data(rng, n=6):
    x = torch.tensor(rng.random((n, 1, 3, 3)), dtype=torch.float32)
    y = torch.tensor(rng.integers(0, N_CLASSES, n))
    return x, y


def test_kl_distill_matches_numpy(rng):
    tau = 4.0
    t = torch.tensor(rng.normal(size=(5, N_CLASSES)), dtype=torch.float64)
    s = torch.tensor(rng.normal(size=(5, N_CLASSES)), dtype=torch.float64)
    p = _softmax(t.numpy() / tau)
    q = _softmax(s.numpy() / tau)
    want = (p * (np.log(p) - np.log(q))).sum(axis=1).mean()
    assert kl_distill(t, s, tau).item() == pytest.approx(want, rel=1e-10)


def test_kl_distill_zero_when_equal(rng):
    z = torch.tensor(rng.normal(size=(3, N_CLASSES)))
    assert kl_distill(z, z.clone(), 4.0).item() == pytest.approx(0.0, abs=1e-7)


def test_kl_distill_detaches_teacher():
    t = torch.randn(3, N_CLASSES, requires_grad=True)
    s = torch.randn(3, N_CLASSES, requires_grad=True)
    kl_distill(t, s, 2.0).backward()
    assert t.grad is None
    assert s.grad is not None


def test_kl_distill_validation():
    with pytest.raises(ValueError, match="shapes"):
        kl_distill(torch.zeros(2, 3), torch.zeros(2, 4), 1.0)
    with pytest.raises(ValueError, match="tau"):
        kl_distill(torch.zeros(2, 3), torch.zeros(2, 3), 0.0)


def test_er_loss_is_mean_ce(rng):
    logits = torch.tensor(rng.normal(size=(5, N_CLASSES)), dtype=torch.float64)
    y = torch.tensor(rng.integers(0, N_CLASSES, 5))
    probs = _softmax(logits.numpy())
    want = -np.log(probs[np.arange(5), y.numpy()]).mean()
    assert er_loss(logits, y).item() == pytest.approx(want, rel=1e-10)
    with pytest.raises(ValueError, match="empty"):
        er_loss(torch.zeros(0, N_CLASSES), torch.zeros(0, dtype=torch.long))


def test_mkd_reduces_to_ce_when_teacher_equals_student(rng, student):
    """With teacher == student and raw == aug, every KL term vanishes."""
    x, y = _data(rng)
    cfg = DistillConfig(alpha=0.1)
    bd = mkd_loss(x, x, y, student, clone_model(student), cfg)
    with torch.no_grad():
        want = F.cross_entropy(student(x), y)
    assert bd.distill.item() == pytest.approx(0.0, abs=1e-6)
    assert bd.total.item() == pytest.approx(want.item(), rel=1e-6)


def test_mkd_half_weight_composition(rng, student, teacher):
    """Total distill equals (lambda/2) * (KL_raw + KL_aug) recomputed by hand."""
    x_raw, y = _data(rng)
    x_aug = x_raw + 0.05
    cfg = DistillConfig(alpha=0.1, tau=4.0)
    bd = mkd_loss(x_raw, x_aug, y, student, teacher, cfg)
    with torch.no_grad():
        s = student(x_aug)
        want = (cfg.lambda_alpha / 2) * (kl_distill(teacher(x_raw), s, 4.0)
                                         + kl_distill(teacher(x_aug), s, 4.0))
        ce = F.cross_entropy(s, y)
    assert bd.distill.item() == pytest.approx(want.item(), rel=1e-6)
    assert bd.ce.item() == pytest.approx(ce.item(), rel=1e-6)
    assert bd.total.item() == pytest.approx((ce + want).item(), rel=1e-6)
    assert bd.baseline_extra.item() == 0.0


def test_multiview_equals_single_when_views_coincide(rng, student, teacher):
    x, y = _data(rng)
    cfg = DistillConfig(alpha=0.05)
    multi = mkd_loss(x, x, y, student, teacher, cfg)
    single = mkd_loss_single_view(x, y, student, teacher, cfg)
    assert multi.total.item() == pytest.approx(single.total.item(), rel=1e-6)


def test_mkd_lambda_zero_is_plain_ce(rng, student, teacher):
    x, y = _data(rng)
    cfg = DistillConfig(alpha=0.1, lambda_alpha=0.0)
    bd = mkd_loss_single_view(x, y, student, teacher, cfg)
    assert bd.distill.item() == 0.0
    with torch.no_grad():
        assert bd.total.item() == pytest.approx(
            F.cross_entropy(student(x), y).item(), rel=1e-6)


def test_mkd_gradient_reaches_student_not_teacher(rng, student, teacher):
    x, y = _data(rng)
    student.train()
    bd = mkd_loss(x, x + 0.1, y, student, teacher, DistillConfig(alpha=0.1))
    bd.total.backward()
    assert any(p.grad is not None and p.grad.abs().sum() > 0
               for p in student.parameters())
    assert all(p.grad is None for p in teacher.parameters())


def test_derpp_oracle(rng, student):
    x, y = _data(rng)
    xa, _ = _data(rng, 4)
    stored = torch.tensor(rng.normal(size=(4, N_CLASSES)), dtype=torch.float32)
    xb, yb = _data(rng, 3)
    ad, bd_w = 0.2, 0.7
    bd = derpp_loss(student, x, y, (xa, stored), (xb, yb), ad, bd_w)
    with torch.no_grad():
        ce = F.cross_entropy(student(x), y)
        extra = ad * F.mse_loss(student(xa), stored) + bd_w * F.cross_entropy(student(xb), yb)
    assert bd.ce.item() == pytest.approx(ce.item(), rel=1e-6)
    assert bd.baseline_extra.item() == pytest.approx(extra.item(), rel=1e-6)
    assert bd.total.item() == pytest.approx((ce + extra).item(), rel=1e-6)
    assert bd.distill.item() == 0.0


def test_derpp_degrades_without_memory(rng, student):
    x, y = _data(rng)
    bd = derpp_loss(student, x, y, None, None)
    with torch.no_grad():
        want = F.cross_entropy(student(x), y)
    assert bd.total.item() == pytest.approx(want.item(), rel=1e-6)
    assert bd.baseline_extra.item() == 0.0


def test_derpp_stored_logits_get_no_gradient(rng, student):
    x, y = _data(rng)
    xa, _ = _data(rng, 4)
    stored = torch.randn(4, N_CLASSES, requires_grad=True)
    derpp_loss(student, x, y, (xa, stored), None).total.backward()
    assert stored.grad is None


def test_erace_masks_stream_head(student, rng):
    """With only one current class the masked stream CE is exactly zero."""
    x, _ = _data(rng, 5)
    y = torch.zeros(5, dtype=torch.long)
    loss = erace_loss(student, x, y, None, None, {0})
    assert loss.item() == pytest.approx(0.0, abs=1e-6)


def test_erace_two_class_oracle(rng, student):
    x, _ = _data(rng, 5)
    y = torch.tensor(rng.integers(0, 2, 5))
    loss = erace_loss(student, x, y, None, None, {0, 1})
    with torch.no_grad():
        logits = student(x)[:, :2].numpy().astype(np.float64)
    probs = _softmax(logits)
    want = -np.log(probs[np.arange(5), y.numpy()]).mean()
    assert loss.item() == pytest.approx(want, rel=1e-5)


def test_erace_memory_term_unmasked(rng, student):
    x, y4 = _data(rng, 5)
    y = torch.tensor(rng.integers(0, 2, 5))
    mx, my = _data(rng, 6)
    loss = erace_loss(student, x, y, mx, my, {0, 1})
    base = erace_loss(student, x, y, None, None, {0, 1})
    with torch.no_grad():
        mem_ce = F.cross_entropy(student(mx), my)
    assert loss.item() == pytest.approx((base + mem_ce).item(), rel=1e-5)


def test_erace_all_classes_current_is_er(rng, student):
    x, y = _data(rng, 5)
    loss = erace_loss(student, x, y, None, None, set(range(N_CLASSES)))
    with torch.no_grad():
        want = er_loss(student(x), y)
    assert loss.item() == pytest.approx(want.item(), rel=1e-6)


def test_snapshot_kd(rng, student, teacher):
    x, y = _data(rng)
    with torch.no_grad():
        ce = F.cross_entropy(student(x), y)
        kl = kl_distill(teacher(x), student(x), 4.0)
    assert snapshot_kd_loss(x, y, student, None, 0.01).item() == pytest.approx(
        ce.item(), rel=1e-6)
    got = snapshot_kd_loss(x, y, student, teacher, 0.01, tau=4.0)
    assert got.item() == pytest.approx((ce + 0.01 * kl).item(), rel=1e-6)


def test_compose_sums_fields(rng, student, teacher):
    x, y = _data(rng)
    base = derpp_loss(student, x, y, None, (x, y), 0.1, 0.5)
    mkd = mkd_loss(x, x + 0.1, y, student, teacher, DistillConfig(alpha=0.1))
    out = compose(base, mkd)
    for name in ("total", "ce", "distill", "baseline_extra"):
        want = getattr(base, name) + getattr(mkd, name)
        assert getattr(out, name).item() == pytest.approx(want.item(), rel=1e-6)


def test_compose_promotes_scalar(rng, student, teacher):
    x, y = _data(rng)
    scalar = er_loss(student(x), y)
    mkd = mkd_loss_single_view(x, y, student, teacher, DistillConfig(alpha=0.1))
    out = compose(scalar, mkd)
    assert isinstance(out, LossBreakdown)
    assert out.baseline_extra.item() == 0.0
    assert out.total.item() == pytest.approx((scalar + mkd.total).item(), rel=1e-6)


def test_as_breakdown_and_item_dict(rng, student):
    x, y = _data(rng)
    bd = as_breakdown(er_loss(student(x), y))
    d = bd.item_dict()
    assert set(d) == {"total", "ce", "distill", "baseline_extra"}
    assert all(isinstance(v, float) for v in d.values())
    assert d["total"] == d["ce"]
    assert d["distill"] == 0.0
