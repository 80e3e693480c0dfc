"""
Segment windowing: (MCG, ECG) cycle pairs become supervised
segment -> sample examples. Each cycle is windowed on its own, so no example
mixes samples from two cycles.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from dsp.signal_core import EcgCycle, McgCycle
from utils.error_handler import BadLength, LengthMismatch, SegmentTooLong
from utils.seeding import make_rng, stable_hash64

logger = logging.getLogger(__name__)

ALIGNMENTS = ("causal", "centered")

DEFAULT_WINDOW = 50
DEFAULT_STRIDE = 1


def label_offset(window: int, alignment: str = "causal") -> int:
    """Index within the segment whose ECG sample is the label"""
    if alignment == "causal":
        return int(window) - 1
    if alignment == "centered":
        return int(window) // 2
    raise ValueError(f"Unknown label alignment {alignment!r}; expected one of {ALIGNMENTS}")


def segment_count(length: int, window: int, stride: int) -> int:
    return (int(length) - int(window)) // int(stride) + 1


@dataclass(frozen=True, eq=False)
class SegmentExample:
    segment: np.ndarray
    label: float
    cycle_id: str
    offset: int


def _check_window(length: int, window: int, stride: int) -> None:
    if window < 1 or stride < 1:
        raise BadLength("Window and stride must be positive", details={"window": window, "stride": stride})
    if window > length:
        raise SegmentTooLong(details={"window": window, "length": length})


def _offsets(length: int, window: int, stride: int) -> np.ndarray:
    _check_window(length, window, stride)
    return np.arange(segment_count(length, window, stride), dtype=np.int64) * stride


def segment_cycle(
    mcg: McgCycle,
    ecg: EcgCycle,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    alignment: str = "causal",
) -> List[SegmentExample]:
    """segment = mcg[i .. i+N-1], label = ecg[i + label_offset] for i = 0, stride, ..."""
    x = mcg.signal.samples
    y = ecg.signal.samples
    if x.size != y.size:
        raise LengthMismatch(details={"mcg_length": int(x.size), "ecg_length": int(y.size),
                                      "cycle_id": mcg.cycle_id})
    shift = label_offset(window, alignment)
    return [
        SegmentExample(segment=x[i:i + window], label=float(y[i + shift]), cycle_id=mcg.cycle_id, offset=int(i))
        for i in _offsets(x.size, window, stride)
    ]


def segment_matrix(mcg: McgCycle, window: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE) -> np.ndarray:
    """(count, window) read-only view of the strided segments"""
    x = mcg.signal.samples
    _check_window(x.size, window, stride)
    return np.lib.stride_tricks.sliding_window_view(x, window)[::stride]


def sequential_iter(
    mcg: McgCycle,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
) -> Iterator[Tuple[int, np.ndarray]]:
    """(offset, segment) pairs in strictly ascending offset order"""
    x = mcg.signal.samples
    for i in _offsets(x.size, window, stride):
        yield int(i), x[i:i + window]


class SegmentDataset:
    """
    Ordered segment examples over a set of cycles.

    Examples are addressed by (cycle index, offset) and materialized on demand,
    so a dataset over many 3008-sample cycles never holds the overlapping
    segments in memory.
    """

    def __init__(
        self,
        mcg_samples: Sequence[np.ndarray],
        ecg_samples: Sequence[np.ndarray],
        cycle_ids: Sequence[str],
        cycle_index: np.ndarray,
        offsets: np.ndarray,
        window: int,
        stride: int,
        alignment: str = "causal",
    ):
        self.mcg_samples = list(mcg_samples)
        self.ecg_samples = list(ecg_samples)
        self.cycle_ids = list(cycle_ids)
        self.cycle_index = np.asarray(cycle_index, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.window = int(window)
        self.stride = int(stride)
        self.alignment = alignment
        self._shift = label_offset(self.window, alignment)

    def __len__(self) -> int:
        return int(self.offsets.size)

    def __getitem__(self, i: int) -> SegmentExample:
        c = int(self.cycle_index[i])
        o = int(self.offsets[i])
        return SegmentExample(
            segment=self.mcg_samples[c][o:o + self.window],
            label=float(self.ecg_samples[c][o + self._shift]),
            cycle_id=self.cycle_ids[c],
            offset=o,
        )

    def __iter__(self) -> Iterator[SegmentExample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def label_index(self) -> int:
        return self._shift

    def aligned_samples(self) -> Tuple[np.ndarray, np.ndarray]:
        """Raw MCG sample at each example's label position, and the ECG label"""
        noisy = np.empty(len(self), dtype=np.float64)
        labels = np.empty(len(self), dtype=np.float64)
        for c in np.unique(self.cycle_index):
            rows = np.flatnonzero(self.cycle_index == c)
            positions = self.offsets[rows] + self._shift
            noisy[rows] = self.mcg_samples[c][positions]
            labels[rows] = self.ecg_samples[c][positions]
        return noisy, labels

    def arrays(self, indices: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Materialize (segments, labels) for the given example indices"""
        idx = np.arange(len(self)) if indices is None else np.asarray(indices, dtype=np.int64)
        segments = np.empty((idx.size, self.window), dtype=np.float64)
        labels = np.empty(idx.size, dtype=np.float64)
        for row, i in enumerate(idx):
            c = self.cycle_index[i]
            o = self.offsets[i]
            segments[row] = self.mcg_samples[c][o:o + self.window]
            labels[row] = self.ecg_samples[c][o + self._shift]
        return segments, labels

    def take(self, indices) -> "SegmentDataset":
        """Dataset over the selected examples, in the given order"""
        idx = np.asarray(indices, dtype=np.int64)
        return SegmentDataset(self.mcg_samples, self.ecg_samples, self.cycle_ids,
                              self.cycle_index[idx], self.offsets[idx],
                              self.window, self.stride, self.alignment)


def build_dataset(
    pairs: Sequence[Tuple[McgCycle, EcgCycle]],
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    alignment: str = "causal",
) -> SegmentDataset:
    """Segment every (mcg, ecg) pair independently and concatenate in pair order"""
    label_offset(window, alignment)
    mcgs, ecgs, ids, cycle_index, offsets = [], [], [], [], []
    for c, (mcg, ecg) in enumerate(pairs):
        x = mcg.signal.samples
        y = ecg.signal.samples
        if x.size != y.size:
            raise LengthMismatch(details={"mcg_length": int(x.size), "ecg_length": int(y.size),
                                          "cycle_id": mcg.cycle_id})
        starts = _offsets(x.size, window, stride)
        mcgs.append(x)
        ecgs.append(y)
        ids.append(mcg.cycle_id)
        cycle_index.append(np.full(starts.size, c, dtype=np.int64))
        offsets.append(starts)

    if pairs:
        cycle_index_arr = np.concatenate(cycle_index)
        offsets_arr = np.concatenate(offsets)
    else:
        cycle_index_arr = np.empty(0, dtype=np.int64)
        offsets_arr = np.empty(0, dtype=np.int64)
    dataset = SegmentDataset(mcgs, ecgs, ids, cycle_index_arr, offsets_arr, window, stride, alignment)
    logger.debug("Built segment dataset", extra={"cycles": len(pairs), "examples": len(dataset)})
    return dataset


def shuffle(dataset: SegmentDataset, seed: int) -> SegmentDataset:
    """Seeded permutation of the examples"""
    return dataset.take(make_rng(seed).permutation(len(dataset)))


def split_by_cycle(
    cycle_ids: Sequence[str],
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> Tuple[List[str], List[str], List[str]]:
    """
    Partition source cycle ids into train / validation / test.

    Ids are ordered by a seeded stable hash and cut by the fractions. With
    three or more ids, every part with a positive fraction gets at least one.
    """
    ordered = sorted(dict.fromkeys(cycle_ids), key=lambda cid: (stable_hash64(f"{seed}:{cid}"), cid))
    n = len(ordered)
    total = float(sum(fractions))
    if total <= 0:
        raise ValueError("Split fractions must sum to a positive value")
    shares = [f / total * n for f in fractions]
    counts = [int(np.floor(s)) for s in shares]
    leftovers = sorted(range(3), key=lambda k: (-(shares[k] - counts[k]), k))
    for k in leftovers[: n - sum(counts)]:
        counts[k] += 1
    if n >= 3:
        for k in range(3):
            if fractions[k] > 0 and counts[k] == 0:
                donor = max(range(3), key=lambda j: counts[j])
                counts[donor] -= 1
                counts[k] += 1

    train = ordered[: counts[0]]
    val = ordered[counts[0]: counts[0] + counts[1]]
    test = ordered[counts[0] + counts[1]:]
    return train, val, test
