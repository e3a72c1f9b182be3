"""Seeded single-pass training loop and run artifacts.

Step order is fixed: retrieve memory, form the combined batch, baseline loss,
optional distillation terms, backward, optimizer step, EMA teacher update,
then reservoir write of the incoming stream rows. Evaluation rows are taken
at nominal task ends; boundary events come from the detector and drive the
snapshot-teacher experiment.
"""

from __future__ import annotations

import copy
import json
import subprocess
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .. import boundary_detector, losses
from ..augmentation import AugPolicy, augment
from ..datastream import iter_blurry, iter_clear, build_schedule
from ..metrics import (AccuracyMatrix, DriftSeries, accuracy, backward_transfer,
                       confusion_matrix, final_avg_accuracy, ncm_eval, predict)
from ..model import build_model
from ..momentum_teacher import DistillConfig, MomentumTeacher, inference_model
from ..replay_buffer import ReplayBuffer
from .config import RunConfig, save_config


def _child_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def _revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


@dataclass
class RunRecord:
    config: dict
    acc_matrix: AccuracyMatrix
    faa: float
    bt: float | None
    faa_by_mode: dict[str, float]
    lambda_alpha: float | None
    logits_acc: float
    ncm_acc: float | None
    drift: DriftSeries
    boundaries: list[int]
    confusion: np.ndarray
    metric_log: list[tuple[int, str, float]]
    wall_clock: float
    revision: str

    def summary_dict(self) -> dict:
        cfg = self.config
        return {
            "dataset": cfg["dataset"], "method": cfg["method"], "mkd": cfg["mkd"],
            "snapshot_kd": cfg["snapshot_kd"], "inference_mode": cfg["inference_mode"],
            "aug_strategy": cfg["aug_strategy"], "n_tasks": cfg["n_tasks"],
            "memory_size": cfg["memory_size"], "alpha": cfg["alpha"],
            "lambda_alpha": self.lambda_alpha, "seed": cfg["seed"],
            "faa": self.faa, "bt": self.bt, "faa_by_mode": self.faa_by_mode,
            "logits_acc": self.logits_acc, "ncm_acc": self.ncm_acc,
            "boundaries": self.boundaries, "wall_clock_s": self.wall_clock,
            "revision": self.revision,
        }

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_config(RunConfig(**self.config), out / "config.yaml")
        with open(out / "metrics.tsv", "w") as fh:
            for step, name, value in self.metric_log:
                fh.write(f"{step}\t{name}\t{value:.10g}\n")
        self.acc_matrix.save(out / "acc_matrix.txt")
        np.savetxt(out / "confusion.txt", self.confusion, fmt="%d")
        (out / "summary.json").write_text(json.dumps(self.summary_dict(), indent=2))
        return out


class Trainer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.schedule = build_schedule(cfg.dataset, cfg.n_tasks, cfg.boundary_mode,
                                       cfg.blur_scale, cfg.seed, cfg.data_root)
        ds = self.schedule.dataset
        with torch.random.fork_rng():
            torch.manual_seed(_child_seed(cfg.seed, 2))
            self.student = build_model(cfg.arch, ds.image_shape, ds.n_classes)
        self.opt = self._make_optimizer(self.student.parameters())
        if cfg.mkd != "off":
            self.teacher = MomentumTeacher(self.student, cfg.alpha)
            self.distill = DistillConfig(cfg.alpha, cfg.lambda_override, cfg.tau,
                                         multiview=(cfg.mkd == "on"))
        else:
            self.teacher = None
            self.distill = None
        self.buffer = ReplayBuffer(cfg.memory_size, ds.image_shape, ds.n_classes,
                                   store_logits=(cfg.method == "derpp"), seed=cfg.seed)
        self.policy = AugPolicy(strategy=cfg.aug_strategy)
        self.aug_gen = torch.Generator().manual_seed(_child_seed(cfg.seed, 4))
        self.snap_gen = torch.Generator().manual_seed(_child_seed(cfg.seed, 6))
        self.snap_rng = np.random.default_rng([cfg.seed, 5])
        self.probe_rng = np.random.default_rng([cfg.seed, 3])

        self.bstate = boundary_detector.initial_state(cfg.min_gap)
        self.frozen = None
        self.tasks_started = 0
        self.step = 0
        self.matrix = AccuracyMatrix(cfg.n_tasks)
        self.drift = DriftSeries()
        self.boundaries: list[int] = []
        self.log: list[tuple[int, str, float]] = []
        self._probe: np.ndarray | None = None
        self._probe_feats: np.ndarray | None = None
        self._test = [(ds.test_images[self.schedule.test_indices(i)],
                       ds.test_labels[self.schedule.test_indices(i)])
                      for i in range(cfg.n_tasks)]

    def _make_optimizer(self, params, lr: float | None = None):
        cfg = self.cfg
        lr = cfg.lr if lr is None else lr
        if cfg.optimizer == "sgd":
            return torch.optim.SGD(params, lr=lr, momentum=cfg.momentum,
                                   weight_decay=cfg.weight_decay)
        return torch.optim.Adam(params, lr=lr, weight_decay=cfg.weight_decay)

    def _log(self, name: str, value: float) -> None:
        self.log.append((self.step, name, float(value)))

    # -- losses ------------------------------------------------------------

    def _with_mkd(self, base, raw, aug, y) -> losses.LossBreakdown:
        if not isinstance(base, losses.LossBreakdown):
            base = losses.as_breakdown(base)
        if self.cfg.mkd == "off":
            return base
        if self.cfg.mkd == "on":
            extra = losses.mkd_loss(raw, aug, y, self.student, self.teacher, self.distill)
        else:
            extra = losses.mkd_loss_single_view(aug, y, self.student, self.teacher,
                                                self.distill)
        return losses.compose(base, extra)

    def train_step(self, batch) -> losses.LossBreakdown:
        cfg = self.cfg
        stream_y = torch.from_numpy(batch.labels)
        n_stream = len(batch)
        mem_a = self.buffer.random_retrieve(cfg.mem_retrieval_cap)
        mem_b = self.buffer.random_retrieve(cfg.mem_retrieval_cap) \
            if cfg.method == "derpp" else None

        parts_x = [torch.from_numpy(batch.images)]
        parts_y = [stream_y]
        for draw in (mem_a,) if mem_b is None else (mem_a, mem_b):
            if len(draw):
                parts_x.append(torch.from_numpy(draw.images))
                parts_y.append(torch.from_numpy(draw.labels))
        raw = torch.cat(parts_x)
        y = torch.cat(parts_y)
        aug = augment(raw, self.policy, self.aug_gen)

        self.student.train()
        n_a = len(mem_a)
        if cfg.snapshot_kd != "off":
            total = losses.snapshot_kd_loss(aug, y, self.student, self.frozen,
                                            cfg.snapshot_lambda, cfg.tau)
            bd = losses.as_breakdown(total)
        elif cfg.method == "er":
            bd = self._with_mkd(losses.er_loss(self.student(aug), y), raw, aug, y)
        elif cfg.method == "erace":
            current = {int(v) for v in batch.labels}
            mem_x = aug[n_stream:] if n_a else None
            mem_y = y[n_stream:] if n_a else None
            base = losses.erace_loss(self.student, aug[:n_stream], stream_y,
                                     mem_x, mem_y, current)
            bd = self._with_mkd(base, raw, aug, y)
        else:  # derpp
            n_b = len(mem_b)
            pair_a = (aug[n_stream:n_stream + n_a],
                      torch.from_numpy(mem_a.stored_logits)) if n_a else None
            pair_b = (aug[n_stream + n_a:], y[n_stream + n_a:]) if n_b else None
            base = losses.derpp_loss(self.student, aug[:n_stream], stream_y,
                                     pair_a, pair_b, cfg.derpp_alpha, cfg.derpp_beta)
            bd = self._with_mkd(base, raw, aug, y)

        stored_logits = None
        if cfg.method == "derpp":
            # pre-update logits on the augmented stream view; eval mode so the
            # extra forward does not touch BN running stats
            self.student.eval()
            with torch.no_grad():
                stored_logits = self.student(aug[:n_stream]).numpy()
            self.student.train()

        self.opt.zero_grad()
        bd.total.backward()
        self.opt.step()
        if self.teacher is not None:
            self.teacher.update(self.student)
        self.buffer.reservoir_update(batch.images, batch.labels, logits=stored_logits)
        return bd

    # -- boundary / snapshot -----------------------------------------------

    def _on_boundary(self) -> None:
        self.tasks_started += 1
        self.boundaries.append(self.step)
        self._log("boundary", 1.0)
        if self.cfg.snapshot_kd != "off" and self.tasks_started >= 2:
            self._capture_snapshot(prev_task=self.tasks_started - 2)

    def _capture_snapshot(self, prev_task: int) -> None:
        model = copy.deepcopy(self.student)
        if self.cfg.snapshot_kd == "high_quality":
            self._offline_train(model, prev_task)
        for p in model.parameters():
            p.requires_grad_(False)
        model.eval()
        self.frozen = model

    def _offline_train(self, model, task: int) -> None:
        """Multi-epoch i.i.d. pass over one task's train split (CE only)."""
        cfg = self.cfg
        ds = self.schedule.dataset
        idx = self.schedule.train_indices(task)
        # the streaming lr is tuned for single-pass batch-10 updates and
        # diverges when reused for a multi-epoch pass, so this phase has its own
        opt = self._make_optimizer(model.parameters(), lr=cfg.snapshot_lr)
        model.train()
        for _ in range(cfg.snapshot_epochs):
            order = self.snap_rng.permutation(idx)
            for start in range(0, len(order), cfg.snapshot_batch):
                sel = order[start:start + cfg.snapshot_batch]
                x = augment(torch.from_numpy(ds.train_images[sel]),
                            self.policy, self.snap_gen)
                loss = losses.er_loss(model(x), torch.from_numpy(ds.train_labels[sel]))
                opt.zero_grad()
                loss.backward()
                opt.step()

    # -- evaluation ---------------------------------------------------------

    def _infer(self, mode: str | None = None):
        return inference_model(mode or self.cfg.inference_mode, self.student,
                               self.teacher)

    def _eval_row(self, after_task: int) -> None:
        model = self._infer()
        for i in range(self.cfg.n_tasks):
            x, yv = self._test[i]
            acc = accuracy(model, x, yv)
            self.matrix.record(after_task, i, acc)
            self._log(f"acc_task{i}", acc)

    def _segment_start(self, task: int) -> None:
        """Redraw the fixed old-class drift probe when a new task begins."""
        snap = self.buffer.snapshot()
        old = np.flatnonzero(~np.isin(snap.labels, self.schedule.tasks[task]))
        self._probe = None
        self._probe_feats = None
        if len(old) == 0:
            return
        take = min(self.cfg.drift_probe_size, len(old))
        pick = self.probe_rng.choice(old, size=take, replace=False)
        self._probe = snap.images[pick]
        # baseline features at the segment start so the first sampled window
        # covers the immediate post-boundary interval
        self._probe_feats = self._probe_features()

    def _probe_features(self) -> np.ndarray:
        self.student.eval()
        with torch.inference_mode():
            feats = self.student.features(torch.from_numpy(self._probe)).numpy()
        self.student.train()
        return feats

    def _sample_drift(self) -> None:
        if self._probe is None:
            return
        feats = self._probe_features()
        if self._probe_feats is not None:
            d = float(np.linalg.norm(feats - self._probe_feats))
            self.drift.append(self.step, d)
            self._log("feature_drift", d)
        self._probe_feats = feats

    # -- run ---------------------------------------------------------------

    def run(self) -> RunRecord:
        cfg = self.cfg
        t0 = time.perf_counter()
        if cfg.boundary_mode == "clear":
            stream = iter_clear(self.schedule, cfg.stream_batch, cfg.seed)
        else:
            stream = iter_blurry(self.schedule, cfg.stream_batch, seed=cfg.seed)
        ends = self.schedule.task_end_positions()
        samples = 0
        next_end = 0
        full_x = self.schedule.dataset.test_images
        full_y = self.schedule.dataset.test_labels

        for batch in stream:
            self.bstate, changed = boundary_detector.observe(self.bstate, batch.labels)
            if changed:
                self._on_boundary()
            bd = self.train_step(batch)
            if self.step % cfg.log_every == 0:
                for name, value in bd.item_dict().items():
                    self._log(f"loss_{name}", value)
            samples += len(batch)
            self.step += 1
            if cfg.drift_every and self.step % cfg.drift_every == 0:
                self._sample_drift()
            if cfg.eval_every and self.step % cfg.eval_every == 0:
                self._log("test_acc", accuracy(self._infer(), full_x, full_y))
            while next_end < cfg.n_tasks and samples >= ends[next_end]:
                self._eval_row(next_end)
                next_end += 1
                if next_end < cfg.n_tasks:
                    self._segment_start(next_end)

        faa = final_avg_accuracy(self.matrix)
        bt = backward_transfer(self.matrix) if cfg.n_tasks >= 2 else None
        modes = ("student",) if self.teacher is None else ("student", "teacher", "averaged")
        faa_by_mode = {}
        for mode in modes:
            model = self._infer(mode)
            faa_by_mode[mode] = float(np.mean(
                [accuracy(model, x, yv) for x, yv in self._test]))

        infer = self._infer()
        logits_acc = accuracy(infer, full_x, full_y)
        try:
            ncm_acc = ncm_eval(infer, self.buffer, full_x, full_y)
        except ValueError as err:
            warnings.warn(f"NCM probe skipped: {err}")
            ncm_acc = None
        conf = confusion_matrix(predict(infer, full_x), full_y,
                                self.schedule.dataset.n_classes)
        return RunRecord(
            config=cfg.to_dict(), acc_matrix=self.matrix, faa=faa, bt=bt,
            faa_by_mode=faa_by_mode,
            lambda_alpha=None if self.distill is None else self.distill.lambda_alpha,
            logits_acc=logits_acc, ncm_acc=ncm_acc,
            drift=self.drift, boundaries=self.boundaries, confusion=conf,
            metric_log=self.log, wall_clock=time.perf_counter() - t0,
            revision=_revision(),
        )


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None) -> RunRecord:
    record = Trainer(cfg).run()
    if out_dir is not None:
        record.save(out_dir)
    return record
