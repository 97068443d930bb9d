"""The columnar spiking network: competition, teacher routing, readout, IO.

One column per class, M microcolumns per column, each microcolumn holding a
single neuron with 784 plastic input weights. A presentation encodes the
image as a spike train and races all C*M neurons through the active window:
the first neuron to reach its adaptive threshold wins and laterally inhibits
every other neuron for the rest of the presentation (global winner-take-all;
ties at the same step go to the lowest column index, then the lowest
microcolumn index). Lateral inhibition gates spike emission only — membrane
integration and eligibility accumulation continue — so the eligibility trace
at the end of a presentation equals the per-pixel input spike counts.

Training routes plasticity by reward: a winner in the labeled column is
potentiated; a winner in a wrong column is depressed and the teacher then
rewards the labeled column's least-committed microcolumn (the one with the
smallest positive weight sum), which recruits fresh capacity early on and
for novel tasks. Prediction reads out the column with the greatest spike
count during the active window.

The network state (config, weights, training RNG) serializes to a binary
file that round-trips bit-exactly, so sequential-task checkpointing
reproduces identical predictions and identical continued training.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .encoder import encode_active_batch
from .seeding import derive_seed, generator_from
from .snncore import N_INPUTS

STATE_MAGIC = b"CLNT"
STATE_FORMAT_VERSION = 1

#: Sentinel step value meaning "did not fire within the active window".
_NO_FIRE = np.iinfo(np.int64).max


class StateFormatError(Exception):
    """Raised when a serialized network file fails a structural check."""


@dataclass(frozen=True)
class ColaNetConfig:
    """Hyperparameters of one columnar network.

    Attributes:
        class_count: Number of columns (one per class).
        microcolumns: Microcolumns per column (M); 15 and 45 are the
            reference configurations, any positive value is allowed.
        alpha: Adaptive-threshold coefficient (>= 0).
        ns: Virtual synapse count enabling potentiation renormalization:
            an integer >= 0, or ``math.inf`` / ``None`` to disable (default).
        u_const: Fixed threshold component (> 0).
        eta_plus: Potentiation rate. The default 0.07 makes a single
            rewarded presentation write a usable template (one-shot
            imprinting), which calibration showed both classifies best and
            protects old tasks (strong templates raise their own adaptive
            thresholds out of reach of unrelated inputs).
        eta_minus: Depression rate; the calibrated ~4:1 ratio to eta_plus
            carves away systematic confusions in a few corrections.
        steps_active: Active window length of a presentation.
        steps_silent: Silent tail length.
        seed: Root seed; initialization, training noise and evaluation
            noise streams all derive from it.
        leak: Per-step membrane decay fraction in [0, 1); 0 integrates
            without decay over the short window.
        w_min: Lower weight clamp.
        w_max: Upper weight clamp.
        init_high: Initial weights are drawn uniformly from [0, init_high].
            The default keeps initial mass negligible next to one imprint
            (~7 units), so templates start clean and, with ns=0
            renormalization, stay zero-mean; large values (e.g. 0.1) bury
            templates in noise mass and push the renormalization
            subtraction into the w_min clamp, breaking conservation.
    """

    class_count: int = 10
    microcolumns: int = 15
    alpha: float = 0.023817
    ns: float | int | None = None
    u_const: float = 1.0
    eta_plus: float = 0.07
    eta_minus: float = 0.3
    steps_active: int = 10
    steps_silent: int = 10
    seed: int = 0
    leak: float = 0.0
    w_min: float = -1.0
    w_max: float = 1.0
    init_high: float = 0.001

    def __post_init__(self):
        if self.class_count < 1 or self.microcolumns < 1:
            raise ValueError("class_count and microcolumns must be >= 1")
        if not 0.0 <= self.leak < 1.0:
            raise ValueError("leak must be in [0, 1)")
        if self.u_const <= 0 or self.alpha < 0:
            raise ValueError("u_const must be > 0 and alpha >= 0")

    @property
    def renormalization_active(self) -> bool:
        """True when potentiation renormalization applies (finite ns)."""
        return self.ns is not None and self.ns != math.inf

    @property
    def neuron_count(self) -> int:
        return self.class_count * self.microcolumns


@dataclass
class PresentationOutcome:
    """Full record of one presentation in training mode.

    Attributes:
        raw_winner: The (column, microcolumn) that actually won the race,
            or None if nothing fired.
        effective_winner: The microcolumn that received reward routing: the
            raw winner when it sits in the labeled column, otherwise the
            teacher-designated least-committed microcolumn of that column.
        winner_spikes: Number of spikes the raw winner emitted during the
            active window (everything else was inhibited).
    """

    raw_winner: tuple[int, int] | None
    effective_winner: tuple[int, int] | None
    winner_spikes: int


class Network:
    """A columnar network with a C x M grid of learning neurons.

    Attributes:
        config: The ColaNetConfig the network was built with.
        weights: float64 array of shape (C*M, 784); neuron (c, m) lives at
            flat row c*M + m, so flat order equals tie-break order.
        rng: Training-noise generator (serialized with the state).
    """

    def __init__(
        self,
        config: ColaNetConfig,
        weights: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.config = config
        if weights is None:
            init_rng = generator_from(config.seed, "colanet-init")
            weights = init_rng.uniform(
                0.0, config.init_high, size=(config.neuron_count, N_INPUTS)
            )
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (config.neuron_count, N_INPUTS):
            raise ValueError("weights shape does not match config grid")
        self.rng = rng if rng is not None else generator_from(config.seed, "colanet-train")
        self._pos_sum = np.maximum(self.weights, 0.0).sum(axis=1)

    # -- bookkeeping -------------------------------------------------------

    def _flat(self, column: int, micro: int) -> int:
        return column * self.config.microcolumns + micro

    def _unflat(self, flat: int) -> tuple[int, int]:
        return divmod(flat, self.config.microcolumns)

    def thresholds(self) -> np.ndarray:
        """Per-neuron adaptive thresholds u_const + alpha * positive mass."""
        return self.config.u_const + self.config.alpha * self._pos_sum

    def positive_sums(self) -> np.ndarray:
        """Per-neuron positive weight mass (flat order), a copy."""
        return self._pos_sum.copy()

    def _refresh_neuron(self, flat: int) -> None:
        self._pos_sum[flat] = np.maximum(self.weights[flat], 0.0).sum()

    # -- dynamics ----------------------------------------------------------

    def _first_crossings(self, drive: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
        """First threshold-crossing step per neuron for given drives.

        Valid up to each neuron's first spike (after which inhibition or the
        winner's own reset applies, neither of which matters for the race).

        Args:
            drive: (..., T, N) per-step summed synaptic drive.
            thresholds: (N,) firing thresholds.

        Returns:
            (... , N) int64 first-crossing step (0-based), or the no-fire
            sentinel.
        """
        leak = self.config.leak
        if leak == 0.0:
            potential = np.cumsum(drive, axis=-2)
        else:
            potential = np.empty_like(drive)
            u = np.zeros_like(drive[..., 0, :])
            for t in range(drive.shape[-2]):
                u = (1.0 - leak) * u + drive[..., t, :]
                potential[..., t, :] = u
        crossed = potential >= thresholds
        first = crossed.argmax(axis=-2).astype(np.int64)
        never = ~crossed.any(axis=-2)
        first[never] = _NO_FIRE
        return first

    def _race(self, spikes_active: np.ndarray) -> tuple[int | None, np.ndarray, np.ndarray]:
        """Run the winner-take-all race for one presentation.

        Args:
            spikes_active: (T, 784) boolean active-window raster.

        Returns:
            (winner_flat or None, drive matrix (T, N), thresholds (N,)).
        """
        drive = spikes_active.astype(np.float64) @ self.weights.T
        thresholds = self.thresholds()
        first = self._first_crossings(drive, thresholds)
        winner = int(first.argmin())
        if first[winner] == _NO_FIRE:
            return None, drive, thresholds
        return winner, drive, thresholds

    def _winner_spike_count(
        self, drive: np.ndarray, winner_flat: int, threshold: float
    ) -> int:
        """Count the winner's spikes over the window (integrate with resets)."""
        leak = self.config.leak
        u = 0.0
        count = 0
        for t in range(drive.shape[0]):
            u = (1.0 - leak) * u + drive[t, winner_flat]
            if u >= threshold:
                count += 1
                u = 0.0
        return count

    def designated_microcolumn(self, column: int) -> int:
        """The column's least-committed microcolumn (smallest positive mass).

        Ties go to the lowest microcolumn index.

        Args:
            column: Column (class) index.

        Returns:
            Microcolumn index within the column.
        """
        m = self.config.microcolumns
        sums = self._pos_sum[column * m : (column + 1) * m]
        return int(sums.argmin())

    def present_full(
        self,
        img: np.ndarray,
        train_mode: bool,
        label: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> tuple[PresentationOutcome, np.ndarray]:
        """Run one presentation and return the full outcome.

        Args:
            img: uint8 image of shape (784,).
            train_mode: Whether teacher forcing applies (requires label).
            label: The true class, present iff train_mode.
            rng: Noise source for the encoder; defaults to the network's
                training stream.

        Returns:
            (outcome, eligibility) where eligibility is the per-pixel input
            spike count over the active window.
        """
        if train_mode != (label is not None):
            raise ValueError("label must be supplied exactly when train_mode")
        if rng is None:
            rng = self.rng
        cfg = self.config
        p = np.asarray(img, dtype=np.float64) / 255.0
        spikes = rng.random((cfg.steps_active, N_INPUTS)) < p
        winner_flat, drive, thresholds = self._race(spikes)

        raw = self._unflat(winner_flat) if winner_flat is not None else None
        spike_count = (
            self._winner_spike_count(drive, winner_flat, thresholds[winner_flat])
            if winner_flat is not None
            else 0
        )
        effective = raw
        if train_mode and (raw is None or raw[0] != label):
            effective = (label, self.designated_microcolumn(label))
        outcome = PresentationOutcome(
            raw_winner=raw, effective_winner=effective, winner_spikes=spike_count
        )
        eligibility = spikes.sum(axis=0, dtype=np.float64)
        return outcome, eligibility

    # -- plasticity --------------------------------------------------------

    def _potentiate(self, flat: int, eligibility: np.ndarray) -> None:
        cfg = self.config
        w = self.weights[flat]
        before = w.sum()
        np.minimum(
            w + cfg.eta_plus * eligibility / cfg.steps_active, cfg.w_max, out=w
        )
        if cfg.renormalization_active:
            added = w.sum() - before
            np.maximum(w - added / (N_INPUTS + cfg.ns), cfg.w_min, out=w)
        self._refresh_neuron(flat)

    def _depress(self, flat: int, eligibility: np.ndarray) -> None:
        cfg = self.config
        w = self.weights[flat]
        np.maximum(
            w - cfg.eta_minus * eligibility / cfg.steps_active, cfg.w_min, out=w
        )
        self._refresh_neuron(flat)


def present(
    net: Network,
    train_mode: bool,
    img: np.ndarray,
    label: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[int, int] | None:
    """Present one image and return the winning microcolumn.

    In training mode the returned winner is the one that receives reward
    routing, which teacher forcing guarantees to sit in the labeled column:
    the raw race winner when it is already correct, otherwise the labeled
    column's least-committed microcolumn. In inference mode the raw race
    winner is returned, or None when nothing fires.

    Args:
        net: The network.
        train_mode: Whether teacher forcing applies.
        img: uint8 image of shape (784,).
        label: True class, required in training mode.
        rng: Optional encoder noise source (defaults to the training stream).

    Returns:
        (column, microcolumn) or None.
    """
    outcome, _ = net.present_full(img, train_mode, label, rng)
    return outcome.effective_winner if train_mode else outcome.raw_winner


def train_sample(net: Network, img: np.ndarray, label: int) -> PresentationOutcome:
    """Train on one labeled image: race, then reward/punish once.

    A correct raw winner is potentiated (with renormalization when enabled).
    A wrong raw winner is depressed and the teacher-designated microcolumn
    of the labeled column is potentiated instead. When nothing fires, only
    the designated microcolumn is potentiated. At most two neurons change.

    Args:
        net: The network (mutated).
        img: uint8 image of shape (784,).
        label: True class in [0, class_count).

    Returns:
        The presentation outcome record.
    """
    if not 0 <= label < net.config.class_count:
        raise ValueError(f"label {label} outside class range")
    outcome, eligibility = net.present_full(img, train_mode=True, label=label)
    raw = outcome.raw_winner
    if raw is not None and raw[0] == label:
        net._potentiate(net._flat(*raw), eligibility)
    else:
        if raw is not None:
            net._depress(net._flat(*raw), eligibility)
        net._potentiate(net._flat(*outcome.effective_winner), eligibility)
    return outcome


def predict(
    net: Network,
    img: np.ndarray,
    rng: np.random.Generator | None = None,
    diagnostics: dict | None = None,
) -> int:
    """Classify one image without plasticity.

    The image is presented in inference mode and the column with the
    greatest total spike count over the active window wins (under global
    winner-take-all only the race winner emits spikes, so this is its
    column); ties go to the lowest column index. A presentation with no
    spikes at all predicts class 0 and increments ``diagnostics["silent"]``
    when a diagnostics dict is supplied.

    Args:
        net: The network (not mutated).
        img: uint8 image of shape (784,).
        rng: Encoder noise source; REQUIRED to be caller-supplied for
            reproducible evaluation (a fresh unseeded stream is used if
            omitted, leaving the network's training stream untouched).
        diagnostics: Optional dict collecting counters.

    Returns:
        Predicted class index.
    """
    if rng is None:
        rng = np.random.default_rng()
    outcome, _ = net.present_full(img, train_mode=False, label=None, rng=rng)
    counts = np.zeros(net.config.class_count, dtype=np.int64)
    if outcome.raw_winner is not None:
        counts[outcome.raw_winner[0]] = outcome.winner_spikes
    if counts.sum() == 0:
        if diagnostics is not None:
            diagnostics["silent"] = diagnostics.get("silent", 0) + 1
        return 0
    return int(counts.argmax())


def train_task(net: Network, task) -> None:
    """Train one epoch: a single online pass over the task's training split.

    Args:
        net: The network (mutated).
        task: TaskSpec whose train split is streamed in order.
    """
    images = task.train.images
    labels = task.train.labels
    for i in range(len(images)):
        train_sample(net, images[i], int(labels[i]))


def evaluate_task(
    net: Network,
    task,
    seed: int | None = None,
    batch_size: int = 256,
    diagnostics: dict | None = None,
) -> float:
    """Accuracy on a task's test split (batched, no mutation).

    Encoding noise comes from a generator derived from
    ``(seed or config.seed, "eval", task_id)``, so evaluating the same
    network on the same task twice yields identical accuracy.

    Args:
        net: The network (not mutated).
        task: TaskSpec whose test split is evaluated.
        seed: Optional root seed override for the evaluation noise.
        batch_size: Number of images encoded and raced per batch.
        diagnostics: Optional dict collecting the "silent" counter.

    Returns:
        Fraction of correctly classified test images.
    """
    root = net.config.seed if seed is None else seed
    rng = generator_from(root, "eval", task.task_id)
    images = task.test.images
    labels = task.test.labels
    if len(images) == 0:
        return 0.0
    thresholds = net.thresholds()
    m = net.config.microcolumns
    correct = 0
    silent = 0
    for start in range(0, len(images), batch_size):
        batch = images[start : start + batch_size]
        spikes = encode_active_batch(batch, net.config.steps_active, rng)
        flat = spikes.reshape(-1, N_INPUTS).astype(np.float64)
        drive = (flat @ net.weights.T).reshape(
            len(batch), net.config.steps_active, -1
        )
        first = net._first_crossings(drive, thresholds)
        winners = first.argmin(axis=1)
        fired = first[np.arange(len(batch)), winners] != _NO_FIRE
        predicted = np.where(fired, winners // m, 0)
        silent += int((~fired).sum())
        correct += int((predicted == labels[start : start + batch_size]).sum())
    if diagnostics is not None:
        diagnostics["silent"] = diagnostics.get("silent", 0) + silent
    return correct / len(labels)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CONFIG_PACK = "<II d d d d d II Q d d d d"


def save_state(net: Network, path: str) -> None:
    """Serialize the network to a binary state file.

    Layout: magic ``CLNT``, uint32 format version, packed config block,
    little-endian float64 weight array (C*M x 784, row-major), then the
    training generator's state. Reloading reproduces bit-identical
    predictions and bit-identical continued training.
    """
    cfg = net.config
    ns_value = math.inf if cfg.ns is None else float(cfg.ns)
    with open(path, "wb") as f:
        f.write(STATE_MAGIC)
        f.write(struct.pack("<I", STATE_FORMAT_VERSION))
        f.write(
            struct.pack(
                _CONFIG_PACK,
                cfg.class_count,
                cfg.microcolumns,
                cfg.alpha,
                ns_value,
                cfg.u_const,
                cfg.eta_plus,
                cfg.eta_minus,
                cfg.steps_active,
                cfg.steps_silent,
                cfg.seed & 0xFFFFFFFFFFFFFFFF,
                cfg.leak,
                cfg.w_min,
                cfg.w_max,
                cfg.init_high,
            )
        )
        f.write(np.ascontiguousarray(net.weights, dtype="<f8").tobytes())
        state = net.rng.bit_generator.state
        f.write(state["state"]["state"].to_bytes(16, "little"))
        f.write(state["state"]["inc"].to_bytes(16, "little"))
        f.write(struct.pack("<II", state["has_uint32"], state["uinteger"]))


def load_state(path: str) -> Network:
    """Load a network saved by ``save_state``.

    Raises:
        StateFormatError: Bad magic, unsupported version, or truncated or
            oversized payload.
    """
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != STATE_MAGIC:
            raise StateFormatError(f"{path}: bad magic {magic!r}")
        version_bytes = f.read(4)
        if len(version_bytes) < 4:
            raise StateFormatError(f"{path}: truncated header")
        (version,) = struct.unpack("<I", version_bytes)
        if version != STATE_FORMAT_VERSION:
            raise StateFormatError(f"{path}: unsupported format version {version}")
        config_size = struct.calcsize(_CONFIG_PACK)
        config_bytes = f.read(config_size)
        if len(config_bytes) < config_size:
            raise StateFormatError(f"{path}: truncated config block")
        (
            class_count,
            microcolumns,
            alpha,
            ns_value,
            u_const,
            eta_plus,
            eta_minus,
            steps_active,
            steps_silent,
            seed,
            leak,
            w_min,
            w_max,
            init_high,
        ) = struct.unpack(_CONFIG_PACK, config_bytes)
        config = ColaNetConfig(
            class_count=class_count,
            microcolumns=microcolumns,
            alpha=alpha,
            ns=None if math.isinf(ns_value) else ns_value,
            u_const=u_const,
            eta_plus=eta_plus,
            eta_minus=eta_minus,
            steps_active=steps_active,
            steps_silent=steps_silent,
            seed=seed,
            leak=leak,
            w_min=w_min,
            w_max=w_max,
            init_high=init_high,
        )
        count = config.neuron_count * N_INPUTS
        weight_bytes = f.read(count * 8)
        if len(weight_bytes) < count * 8:
            raise StateFormatError(f"{path}: truncated weight payload")
        weights = (
            np.frombuffer(weight_bytes, dtype="<f8")
            .reshape(config.neuron_count, N_INPUTS)
            .copy()
        )
        rng_bytes = f.read(16 + 16 + 8)
        if len(rng_bytes) < 40:
            raise StateFormatError(f"{path}: truncated rng state")
        if f.read(1):
            raise StateFormatError(f"{path}: trailing bytes after payload")
    bit_gen = np.random.PCG64()
    bit_gen.state = {
        "bit_generator": "PCG64",
        "state": {
            "state": int.from_bytes(rng_bytes[:16], "little"),
            "inc": int.from_bytes(rng_bytes[16:32], "little"),
        },
        "has_uint32": struct.unpack("<I", rng_bytes[32:36])[0],
        "uinteger": struct.unpack("<I", rng_bytes[36:40])[0],
    }
    return Network(config, weights=weights, rng=np.random.Generator(bit_gen))


# ---------------------------------------------------------------------------
# Heatmap export
# ---------------------------------------------------------------------------


def export_heatmaps(net: Network, path: str) -> None:
    """Export every receptive field as one tiled PPM image.

    The image is a class_count x microcolumns grid of 28x28 tiles separated
    by 1-pixel black lines. Weights map through a diverging colormap
    centered at zero: white for 0, pure red at the most positive magnitude,
    pure blue at the most negative, normalized by the largest absolute
    weight in the whole grid (an all-zero network renders uniform white).

    Args:
        net: The network to visualize.
        path: Output file; written as binary PPM (P6).
    """
    cfg = net.config
    c, m = cfg.class_count, cfg.microcolumns
    height = c * 28 + (c - 1)
    width = m * 28 + (m - 1)
    canvas = np.zeros((height, width, 3), dtype=np.uint8)
    vmax = np.abs(net.weights).max()
    for col in range(c):
        for micro in range(m):
            tile = net.weights[col * m + micro].reshape(28, 28)
            rgb = np.full((28, 28, 3), 255, dtype=np.uint8)
            if vmax > 0:
                scaled = np.clip(tile / vmax, -1.0, 1.0)
                fade = np.round(255 * np.abs(scaled)).astype(np.uint8)
                pos = scaled > 0
                neg = scaled < 0
                rgb[pos, 1] = 255 - fade[pos]
                rgb[pos, 2] = 255 - fade[pos]
                rgb[neg, 0] = 255 - fade[neg]
                rgb[neg, 1] = 255 - fade[neg]
            top = col * 29
            left = micro * 29
            canvas[top : top + 28, left : left + 28] = rgb
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(canvas.tobytes())


class ColaNetAdapter:
    """Model adapter wiring the columnar network into ``run_sequence``."""

    def __init__(self, config: ColaNetConfig):
        self.net = Network(config)

    def train_task(self, task) -> None:
        train_task(self.net, task)

    def evaluate_task(self, task) -> float:
        return evaluate_task(self.net, task)

    def save(self, path: str) -> None:
        save_state(self.net, path)

    def load(self, path: str) -> None:
        self.net = load_state(path)
