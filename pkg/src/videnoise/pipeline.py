"""Streaming denoising engine.

Frames enter an m-deep input FIFO; once it fills, every push denoises the
buffered stack patch-by-patch in mini-batches, aggregates the results into an
m-deep output accumulator aligned by absolute frame time, and emits the
weight-normalized oldest plane. Each output frame therefore averages
estimates from every 3D patch that contained it, and the k-th output
corresponds to input frame k with a fixed delay of m-1 pushes.

Mini-batch scheduling: every buffer contributes its full patch sweep to a
pending queue, and full batches of M patches are consumed from the front.
Leftovers (fewer than M) stay queued and lead the next step's first batch.
Two guards keep emission coverage exact: the very first buffer is drained
completely (its tail as one short batch), and M is capped so the pending
queue can never span enough buffers to starve the plane being emitted.

Two patch-formation modes share the learner: ``a1`` stacks co-located 2D
patches from consecutive frames; ``a2`` assembles them by block matching
around the middle frame (optionally over a pre-cleaned copy of the buffer)
and deposits each slice back at its matched position with a
sparsity-proportional weight. ``dct3d`` is ``a1`` with the transform frozen
at its separable DCT initialization.
"""

import dataclasses
import json
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import blockmatch, kernels, patches, transform
from .errors import ConfigError, ShapeError
from .videoio import Video

MODES = ("a1", "a2", "dct3d")

# (sigma, forgetting factor, passes); intermediate sigmas use the nearest row
SIGMA_TABLE = (
    (5.0, 0.68, 1),
    (10.0, 0.72, 2),
    (15.0, 0.76, 3),
    (20.0, 0.83, 3),
    (50.0, 0.89, 4),
)


def defaults_for_sigma(sigma):
    """(rho, passes) from the tuning table, nearest listed sigma."""
    _, rho, passes = min(SIGMA_TABLE, key=lambda row: (abs(row[0] - sigma), row[0]))
    return rho, passes


@dataclass
class DenoiseConfig:
    """Engine hyperparameters. ``None`` fields resolve from ``sigma``."""

    sigma: float
    mode: str = "a1"
    n1: int = 8
    n2: int = 8
    m: int = 9
    alpha0: float = 1.9
    lambda0: float = 1e-2
    minibatch: int | None = None  # default 15 * m * n1 * n2
    rho: float | None = None
    passes: int | None = None
    h1: int = 21
    h2: int = 21
    spatial_stride: int = 1
    precleaning: bool = True
    bm_values: str = "noisy"  # noisy | precleaned
    bm_weighting: str = "sparsity"  # sparsity | uniform
    reset_learner_per_pass: bool = True
    alternations: int = 1
    seed: int = 0
    workers: int = 1

    def resolved(self):
        """Copy with every ``None`` filled in and values validated."""
        cfg = dataclasses.replace(self)
        table_rho, table_passes = defaults_for_sigma(cfg.sigma)
        if cfg.rho is None:
            cfg.rho = table_rho
        if cfg.passes is None:
            cfg.passes = table_passes
        if cfg.minibatch is None:
            cfg.minibatch = 15 * cfg.m * cfg.n1 * cfg.n2
        cfg.validate()
        return cfg

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "a2" and self.m % 2 == 0:
            raise ConfigError("block-matching mode needs an odd temporal depth m")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if not 0.0 < (self.rho if self.rho is not None else 1.0) <= 1.0:
            raise ConfigError("forgetting factor rho must lie in (0, 1]")
        if self.minibatch is not None and self.minibatch < 1:
            raise ConfigError("mini-batch size must be positive")
        if self.passes is not None and self.passes < 1:
            raise ConfigError("pass count must be positive")
        if self.alpha0 < 0 or self.lambda0 < 0:
            raise ConfigError("alpha0 and lambda0 must be non-negative")
        if self.h1 < self.n1 or self.h2 < self.n2:
            raise ConfigError("search window must be at least the patch size")
        if self.bm_weighting not in ("sparsity", "uniform"):
            raise ConfigError("bm_weighting must be 'sparsity' or 'uniform'")
        if self.bm_values not in ("noisy", "precleaned"):
            raise ConfigError("bm_values must be 'noisy' or 'precleaned'")
        if self.alternations < 1 or self.workers < 1:
            raise ConfigError("alternations and workers must be positive")

    def echo(self):
        """One-line-per-field rendering of the effective configuration."""
        items = dataclasses.asdict(self)
        return "\n".join(f"{key}={items[key]}" for key in sorted(items))


class _PendingQueue:
    """FIFO of extracted-but-unprocessed patches with deposit coordinates."""

    def __init__(self):
        self._chunks = deque()
        self._count = 0

    def __len__(self):
        return self._count

    def append(self, vectors, times, rows, cols):
        if vectors.shape[1] == 0:
            return
        self._chunks.append((vectors, times, rows, cols))
        self._count += vectors.shape[1]

    def pop(self, count):
        """Remove and return the oldest ``count`` patches as one block."""
        if count > self._count:
            raise ValueError(f"cannot pop {count} of {self._count} pending patches")
        parts = []
        remaining = count
        while remaining:
            vectors, times, rows, cols = self._chunks.popleft()
            size = vectors.shape[1]
            if size <= remaining:
                parts.append((vectors, times, rows, cols))
                remaining -= size
            else:
                parts.append(
                    (vectors[:, :remaining], times[:remaining], rows[:remaining], cols[:remaining])
                )
                self._chunks.appendleft(
                    (vectors[:, remaining:], times[remaining:], rows[remaining:], cols[remaining:])
                )
                remaining = 0
        self._count -= count
        if len(parts) == 1:
            return parts[0]
        return (
            np.concatenate([p[0] for p in parts], axis=1),
            np.concatenate([p[1] for p in parts], axis=0),
            np.concatenate([p[2] for p in parts], axis=0),
            np.concatenate([p[3] for p in parts], axis=0),
        )

    def as_block(self):
        """Concatenated view of everything pending (checkpointing)."""
        if not self._chunks:
            return None
        return (
            np.concatenate([c[0] for c in self._chunks], axis=1),
            np.concatenate([c[1] for c in self._chunks], axis=0),
            np.concatenate([c[2] for c in self._chunks], axis=0),
            np.concatenate([c[3] for c in self._chunks], axis=0),
        )


class DenoiseEngine:
    """One streaming denoiser instance; drive with :meth:`push_frame`."""

    def __init__(self, config, initial_learner=None, initial_precleaner=None):
        self.config = config.resolved()
        self._t = 0
        self._fifo = deque(maxlen=self.config.m)
        self._geom = None
        self._acc = None
        self._pending = _PendingQueue()
        self._oldest_time = 1
        self._flushed = False
        self._effective_minibatch = None
        self._learner = initial_learner
        self._precleaner = initial_precleaner
        self.fill_count = 0  # pixels recovered by the block-matching fallback fill

    # -- setup ------------------------------------------------------------

    def _ensure_geometry(self, frame):
        cfg = self.config
        if self._geom is not None:
            if frame.shape != (self._geom.frame_h, self._geom.frame_w):
                raise ShapeError(
                    f"frame shape {frame.shape} does not match "
                    f"{(self._geom.frame_h, self._geom.frame_w)}"
                )
            return
        if frame.ndim != 2:
            raise ShapeError(f"frames must be 2D grayscale, got shape {frame.shape}")
        self._geom = patches.PatchGeometry(
            cfg.n1, cfg.n2, cfg.m, frame.shape[0], frame.shape[1], cfg.spatial_stride
        )
        self._acc = patches.OutputAccumulator(frame.shape[0], frame.shape[1], cfg.m)
        # cap M so the pending queue can never starve the plane being emitted:
        # carried leftovers must span fewer buffers than the aggregation window
        # (or than the half-window whose middle frame provides full coverage in
        # block-matching mode)
        p = self._geom.patch_count
        span = (cfg.m - 1) // 2 if cfg.mode == "a2" else cfg.m - 1
        self._effective_minibatch = max(1, min(cfg.minibatch, span * p + 1))
        if self._learner is None:
            self._learner = transform.LearnerState.fresh(
                cfg.n1, cfg.n2, cfg.m, cfg.rho, cfg.lambda0
            )
        if cfg.mode == "a2" and cfg.precleaning and self._precleaner is None:
            self._precleaner = transform.LearnerState.fresh(
                cfg.n1, cfg.n2, cfg.m, cfg.rho, cfg.lambda0
            )

    @property
    def effective_minibatch(self):
        return self._effective_minibatch

    @property
    def latency(self):
        return self.config.m - 1

    # -- streaming --------------------------------------------------------

    def push_frame(self, frame):
        """Feed one frame; returns a denoised frame once the FIFO is full."""
        if self._flushed:
            raise RuntimeError("engine already flushed")
        frame = np.asarray(frame, dtype=np.float64)
        self._ensure_geometry(frame)
        self._t += 1
        self._fifo.append(frame.copy())
        if self._t < self.config.m:
            return None
        return self._process_step()

    def flush(self):
        """Replicate the last frame m-1 times to drain the output FIFO."""
        if self._t < self.config.m:
            raise RuntimeError("flush called before the first full buffer")
        if self._flushed:
            return []
        last = self._fifo[-1]
        outputs = [self.push_frame(last) for _ in range(self.config.m - 1)]
        self._flushed = True
        return outputs

    # -- internals ---------------------------------------------------------

    def _process_step(self):
        cfg = self.config
        t = self._t
        buffer = np.ascontiguousarray(np.stack(tuple(self._fifo), axis=2))
        parity = t % 2
        positions = patches.serpentine_order(self._geom, parity)
        if cfg.mode == "a2":
            source = self._preclean(buffer, parity) if cfg.precleaning else buffer
            depths, rows, cols, _ = self._match_all(source, positions)
            vectors = kernels.gather_bm_patches(
                source, depths, rows, cols, cfg.n1, cfg.n2
            )
            times = (t - cfg.m + 1) + depths
        else:
            source = buffer
            vectors = patches.gather_minibatch(source, positions, cfg.n1, cfg.n2)
            k = positions.shape[0]
            depth = np.arange(cfg.m, dtype=np.int64)
            times = np.broadcast_to(t - cfg.m + 1 + depth, (k, cfg.m)).copy()
            rows = np.repeat(positions[:, 0:1], cfg.m, axis=1)
            cols = np.repeat(positions[:, 1:2], cfg.m, axis=1)
        self._pending.append(vectors, times, rows, cols)
        self._drain_pending(everything=(t == cfg.m))
        if cfg.mode == "a2":
            self._fill_uncovered(source)
        out = patches.normalize_oldest_frame(self._acc)
        self._acc.shift()
        self._oldest_time += 1
        return out

    def _drain_pending(self, everything=False):
        m_eff = self._effective_minibatch
        while len(self._pending) >= m_eff:
            self._run_batch(self._pending.pop(m_eff))
        if everything and len(self._pending):
            self._run_batch(self._pending.pop(len(self._pending)))

    def _run_batch(self, block):
        cfg = self.config
        vectors, times, rows, cols = block
        alphas = np.full(vectors.shape[1], cfg.alpha0 * cfg.sigma)
        denoised, codes, _ = transform.denoise_minibatch(
            self._learner,
            transform.MiniBatch(vectors, alphas),
            update=(cfg.mode != "dct3d"),
            alternations=cfg.alternations,
        )
        if cfg.mode == "a2" and cfg.bm_weighting == "sparsity":
            wts = blockmatch.batch_weights(codes.columns)
        else:
            wts = np.ones(vectors.shape[1])
        planes = times - self._oldest_time
        planes = np.where((planes >= 0) & (planes < cfg.m), planes, -1)
        kernels.deposit_patches(
            self._acc.values,
            self._acc.weights,
            np.ascontiguousarray(planes),
            np.ascontiguousarray(rows),
            np.ascontiguousarray(cols),
            denoised,
            wts,
            cfg.n1,
            cfg.n2,
        )

    def _match_all(self, source, positions):
        cfg = self.config
        if cfg.workers <= 1 or positions.shape[0] < 2 * cfg.workers:
            return blockmatch.match_positions(
                source, positions, cfg.n1, cfg.n2, cfg.h1, cfg.h2
            )
        splits = np.array_split(np.arange(positions.shape[0]), cfg.workers)
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(
                pool.map(
                    lambda idx: blockmatch.match_positions(
                        source, positions[idx], cfg.n1, cfg.n2, cfg.h1, cfg.h2
                    ),
                    splits,
                )
            )
        return tuple(np.concatenate([r[j] for r in results], axis=0) for j in range(4))

    def _preclean(self, buffer, parity):
        """Denoise the whole buffer in place with a parallel learner."""
        cfg = self.config
        cleaned, self._precleaner = denoise_buffer_once(
            self._precleaner,
            buffer,
            self._geom,
            cfg.alpha0 * cfg.sigma,
            self._effective_minibatch,
            parity,
            alternations=cfg.alternations,
        )
        return cleaned

    def _fill_uncovered(self, source):
        """Backstop for block-matching coverage holes on the oldest plane.

        Matched slices land at data-dependent positions, so the few frames
        that were never the buffer's middle frame can miss pixels near the
        borders. Those pixels fall back to the (pre-cleaned) input value.
        """
        weights = self._acc.weights[:, :, 0]
        holes = weights <= 0.0
        count = int(np.count_nonzero(holes))
        if count:
            self._acc.values[:, :, 0][holes] = source[:, :, 0][holes]
            self._acc.weights[:, :, 0][holes] = 1.0
            self.fill_count += count

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, path):
        """Full engine state as an ``.npz``; resume with :meth:`load_checkpoint`."""
        payload = {
            "config_json": np.bytes_(json.dumps(dataclasses.asdict(self.config))),
            "t": np.int64(self._t),
            "oldest_time": np.int64(self._oldest_time),
            "flushed": np.int64(self._flushed),
            "fill_count": np.int64(self.fill_count),
        }
        if self._fifo:
            payload["fifo"] = np.stack(tuple(self._fifo))
        if self._acc is not None:
            payload["acc_values"] = self._acc.values
            payload["acc_weights"] = self._acc.weights
        for prefix, learner in (("learner", self._learner), ("precleaner", self._precleaner)):
            if learner is None:
                continue
            payload[f"{prefix}_w"] = learner.w
            payload[f"{prefix}_gamma"] = learner.gamma
            payload[f"{prefix}_theta"] = learner.theta
            payload[f"{prefix}_scalars"] = np.asarray(
                [learner.beta, learner.rho, learner.lambda0, learner.minibatch_count]
            )
        block = self._pending.as_block()
        if block is not None:
            payload["pending_vectors"] = block[0]
            payload["pending_times"] = block[1]
            payload["pending_rows"] = block[2]
            payload["pending_cols"] = block[3]
        np.savez(path, **payload)

    @classmethod
    def load_checkpoint(cls, path):
        with np.load(path) as data:
            cfg = DenoiseConfig(**json.loads(bytes(data["config_json"]).decode()))
            engine = cls(cfg)
            engine._t = int(data["t"])
            engine._oldest_time = int(data["oldest_time"])
            engine._flushed = bool(int(data["flushed"]))
            engine.fill_count = int(data["fill_count"])
            if "fifo" in data:
                frames = data["fifo"]
                engine._ensure_geometry(frames[0])
                for frame in frames:
                    engine._fifo.append(frame.astype(np.float64))
            if "acc_values" in data:
                engine._acc.values[:] = data["acc_values"]
                engine._acc.weights[:] = data["acc_weights"]
            for prefix, attr in (("learner", "_learner"), ("precleaner", "_precleaner")):
                if f"{prefix}_w" not in data:
                    continue
                beta, rho, lambda0, count = data[f"{prefix}_scalars"]
                setattr(
                    engine,
                    attr,
                    transform.LearnerState(
                        w=np.ascontiguousarray(data[f"{prefix}_w"]),
                        gamma=np.ascontiguousarray(data[f"{prefix}_gamma"]),
                        theta=np.ascontiguousarray(data[f"{prefix}_theta"]),
                        beta=float(beta),
                        rho=float(rho),
                        lambda0=float(lambda0),
                        minibatch_count=int(count),
                    ),
                )
            if "pending_vectors" in data:
                engine._pending.append(
                    np.ascontiguousarray(data["pending_vectors"]),
                    np.ascontiguousarray(data["pending_times"]),
                    np.ascontiguousarray(data["pending_rows"]),
                    np.ascontiguousarray(data["pending_cols"]),
                )
        return engine


def denoise_buffer_once(learner, buffer, geom, alpha, minibatch, parity, alternations=1):
    """One full mini-batch sweep over a buffer; returns (cleaned, learner).

    Every patch is processed (the tail as a short batch) and deposited with
    unit weight into a buffer-local accumulator, which is then normalized
    plane by plane. Used as the pre-cleaning stage of block-matching mode.
    """
    n1, n2, m = geom.n1, geom.n2, geom.m
    positions = patches.serpentine_order(geom, parity)
    vectors = patches.gather_minibatch(buffer, positions, n1, n2)
    acc = patches.OutputAccumulator(buffer.shape[0], buffer.shape[1], m)
    k_total = vectors.shape[1]
    depth = np.arange(m, dtype=np.int64)
    for start in range(0, k_total, minibatch):
        sl = slice(start, min(start + minibatch, k_total))
        block = np.ascontiguousarray(vectors[:, sl])
        alphas = np.full(block.shape[1], alpha)
        denoised, _, learner = transform.denoise_minibatch(
            learner,
            transform.MiniBatch(block, alphas),
            alternations=alternations,
        )
        k = block.shape[1]
        planes = np.broadcast_to(depth, (k, m)).copy()
        rows = np.repeat(positions[sl, 0:1], m, axis=1)
        cols = np.repeat(positions[sl, 1:2], m, axis=1)
        kernels.deposit_patches(
            acc.values, acc.weights, planes, rows, cols, denoised, np.ones(k), n1, n2
        )
    return patches.normalize_all(acc), learner


def run_stream(engine, video):
    """Push every frame of ``video`` and flush; returns the denoised clip."""
    frames = video.frames if isinstance(video, Video) else np.asarray(video)
    outputs = []
    for frame in frames:
        out = engine.push_frame(frame)
        if out is not None:
            outputs.append(out)
    outputs.extend(engine.flush())
    return Video(np.stack(outputs), source_format="denoised")


def estimate_remaining_noise(noisy, denoised, sigma):
    """Residual noise level after a denoising pass.

    Variance-subtraction estimate: the mean squared change the pass applied
    is attributed to removed noise, so the remainder is
    ``sqrt(max(0, sigma^2 - mean((noisy - denoised)^2)))``; never above
    ``sigma``.
    """
    a = noisy.frames if isinstance(noisy, Video) else np.asarray(noisy)
    b = denoised.frames if isinstance(denoised, Video) else np.asarray(denoised)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    removed = float(np.mean((a - b) ** 2))
    return float(np.sqrt(max(0.0, sigma * sigma - removed)))


def run_multipass(video, config, return_passes=False):
    """Full multi-pass protocol: L passes, each re-denoising the last output.

    Pass 1 consumes the noisy input at the configured sigma; pass l consumes
    pass l-1's output with sigma re-estimated against the original noisy
    input. The learner restarts each pass unless the config says otherwise.
    Each pass streams with the usual m-1 frame delay, so the composite delay
    is (m-1) times the pass count.
    """
    cfg = config.resolved()
    if video.frame_count < cfg.m:
        raise ShapeError(
            f"need at least m={cfg.m} frames, got {video.frame_count}"
        )
    current = video
    sigma = cfg.sigma
    outputs = []
    learner = None
    precleaner = None
    for _ in range(cfg.passes):
        pass_cfg = dataclasses.replace(cfg, sigma=sigma, passes=1)
        engine = DenoiseEngine(
            pass_cfg,
            initial_learner=None if cfg.reset_learner_per_pass else learner,
            initial_precleaner=None if cfg.reset_learner_per_pass else precleaner,
        )
        current = run_stream(engine, current)
        outputs.append(current)
        learner = engine._learner
        precleaner = engine._precleaner
        sigma = estimate_remaining_noise(video, current, cfg.sigma)
    if return_passes:
        return outputs
    return current
