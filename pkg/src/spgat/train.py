"""Training loop, evaluation and multi-session runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ops
from .config import RunConfig, format_config, parse_config
from .data import (HsiCube, LabelMap, PatchBatch, SplitSpec, extract_patches, load_cube,
                   load_labels, make_split, normalize_bands, synth_scene)
from .errors import FormatError, NumericError, SpgatError
from .metrics import EvalReport, SessionSummary
from .model import Model, forward, init_model, predict
from .ops import BatchNormState
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward


@dataclass
class Dataset:
    cube: HsiCube
    labels: LabelMap
    split: SplitSpec

    @property
    def classes(self) -> int:
        return self.labels.num_classes


def load_dataset(config: RunConfig) -> Dataset:
    """Cube and labels from disk (or the synthetic scene), normalised and split."""
    if config.cube_header:
        cube = load_cube(config.cube_header, config.cube_data)
        labels = load_labels(config.labels, cube.height, cube.width)
    else:
        cube, labels = synth_scene(config.synth_classes, config.synth_bands,
                                   config.synth_height, config.synth_width,
                                   config.synth_noise, config.synth_context, config.synth_seed)
    if config.normalize:
        cube = normalize_bands(cube, labels)
    split = make_split(labels, config.split_request(), config.seed)
    return Dataset(cube, labels, split)


@dataclass
class TrainResult:
    model: Model
    losses: list[float] = field(default_factory=list)  # mean loss per epoch


def _session_seeds(seed: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    init, shuffle = np.random.SeedSequence(seed).spawn(2)
    return init, shuffle


def train(model: Model, patches: PatchBatch, epochs: int, lr: float = 1e-3,
          batch_size: int = 16, seed: int = 0,
          on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    """Mini-batch Adam on ``patches``; ``model`` is updated in place.

    The visiting order is reshuffled every epoch from a generator seeded by
    ``seed``.
    """
    if len(patches) == 0:
        raise ValueError("no training patches")
    _, shuffle_seed = _session_seeds(seed)
    rng = np.random.default_rng(shuffle_seed)
    opt = AdamState(lr=lr)
    params = model.params
    n = len(patches)
    x_all = patches.inputs.data
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch_size)):
            idx = np.sort(order[start:start + batch_size])
            x = Tensor(x_all[idx], _checked=True)
            for p in params.values():
                p.zero_grad()
            try:
                with Tape() as tape:
                    loss = ops.cross_entropy(forward(model, x, training=True),
                                             patches.labels[idx])
                backward(tape, loss, retain_intermediate=False)
                value = loss.item()
                del tape, loss
                adam_step(params, {k: p.grad for k, p in params.items()}, opt)
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, batch {b}: {e}") from e
            total += value * len(idx)
        losses.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
    return TrainResult(model, losses)


def evaluate(model: Model, cube: HsiCube, rows: np.ndarray, classes: int | None = None) -> EvalReport:
    """Score ``model`` on split rows ``[n, 3]`` of (class, row, col)."""
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    classes = classes or model.config.classes
    if len(rows) == 0:
        return EvalReport.from_predictions([], [], classes)
    pred = predict(model, cube, rows[:, 1:])
    return EvalReport.from_predictions(rows[:, 0] - 1, pred, classes)


@dataclass
class SessionResult:
    report: EvalReport
    losses: list[float]
    model: Model


def run_session(config: RunConfig, data: Dataset, seed: int) -> SessionResult:
    mcfg = config.model_config(data.classes)
    init_seed, _ = _session_seeds(seed)
    model = init_model(mcfg, init_seed)
    patches = extract_patches(data.cube, data.labels, data.split.train_coords, config.patch)
    result = train(model, patches, config.epochs, config.lr, config.batch_size, seed)
    report = evaluate(model, data.cube, data.split.test, data.classes)
    return SessionResult(report, result.losses, model)


def run_sessions(config: RunConfig, data: Dataset,
                 on_session: Callable[[int, SessionResult], None] | None = None) -> SessionSummary:
    """Train ``config.sessions`` times with seeds ``seed, seed+1, ...`` on one split."""
    summary = SessionSummary()
    for i in range(config.sessions):
        try:
            res = run_session(config, data, config.seed + i)
        except SpgatError as e:
            raise type(e)(f"session {i}: {e}") from e
        summary.sessions.append(res.report)
        if on_session is not None:
            on_session(i, res)
    return summary


def classification_map(model: Model, cube: HsiCube, labels: LabelMap) -> np.ndarray:
    """Predicted 1-based classes at every labeled pixel, 0 elsewhere."""
    out = np.zeros(labels.shape, dtype=np.int64)
    coords = labels.labeled_coords()
    if len(coords):
        out[coords[:, 0], coords[:, 1]] = predict(model, cube, coords) + 1
    return out


def save_model(path, model: Model, config: RunConfig) -> None:
    """Parameters, batch-norm statistics and the run config in one ``.npz``."""
    arrays = {f"param/{k}": p.data for k, p in model.params.items()}
    for k, st in model.state.items():
        arrays[f"state/{k}/mean"] = st.running_mean
        arrays[f"state/{k}/var"] = st.running_var
    arrays["meta/config"] = np.array(format_config(config))
    arrays["meta/classes"] = np.array(model.config.classes)
    np.savez(path, **arrays)


def load_model(path) -> tuple[Model, RunConfig]:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read model file {path}: {e}") from None
    try:
        config = parse_config(str(arrays["meta/config"]))
        classes = int(arrays["meta/classes"])
    except KeyError as e:
        raise FormatError(f"{path}: missing entry {e}") from None
    model = init_model(config.model_config(classes), 0)
    for k, p in model.params.items():
        src = arrays.get(f"param/{k}")
        if src is None or src.shape != p.shape:
            raise FormatError(f"{path}: parameter {k!r} missing or mis-shaped")
        p.data = src.astype(np.float64)
    for k in model.state:
        model.state[k] = BatchNormState(arrays[f"state/{k}/mean"], arrays[f"state/{k}/var"])
    return model, config
