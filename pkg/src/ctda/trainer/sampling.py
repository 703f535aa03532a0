import logging
import math
from typing import Dict, Iterator, Tuple

import numpy as np

from ctda.errors import BatchError

logger = logging.getLogger(__name__)


class BalancedBatchSampler:
    """
    Yield index batches with the same number of samples from every (class, domain) cell.

    Each cell keeps its own shuffled queue; when a queue runs dry it is reshuffled and
    restarted, so short cells are oversampled. One epoch is long enough for the largest
    cell to be seen once.
    """

    def __init__(self, class_labels, domain_labels, batch_size: int, rng: np.random.Generator,
                 n_classes: int | None = None):
        self.class_labels = np.asarray(class_labels)
        self.domain_labels = np.asarray(domain_labels)
        self.n_classes = n_classes or int(self.class_labels.max()) + 1
        self.rng = rng

        n_cells = 2 * self.n_classes
        if batch_size <= 0 or batch_size % n_cells:
            raise BatchError(f"batch size {batch_size} is not divisible by {n_cells} (classes x domains)")
        self.batch_size = batch_size
        self.per_cell = batch_size // n_cells

        self.cells: Dict[Tuple[int, int], np.ndarray] = {}
        for c in range(self.n_classes):
            for d in (0, 1):
                indices = np.flatnonzero((self.class_labels == c) & (self.domain_labels == d))
                if not len(indices):
                    raise BatchError(f"cell (class {c}, domain {d}) is empty")
                if len(indices) < self.per_cell:
                    logger.warning(f"Cell (class {c}, domain {d}) has {len(indices)} samples, "
                                   f"oversampling to {self.per_cell} per batch")
                self.cells[(c, d)] = indices

        largest = max(len(v) for v in self.cells.values())
        self.num_batches = math.ceil(largest / self.per_cell)

    def __len__(self) -> int:
        return self.num_batches

    def __iter__(self) -> Iterator[np.ndarray]:
        queues = {}
        for key, indices in self.cells.items():
            queue = indices.copy()
            self.rng.shuffle(queue)
            queues[key] = [queue, 0]

        for _ in range(self.num_batches):
            parts = [self._draw(queues[key], self.cells[key]) for key in self.cells]
            batch = np.concatenate(parts)
            self.rng.shuffle(batch)
            yield batch

    def _draw(self, state, indices: np.ndarray) -> np.ndarray:
        out = []
        needed = self.per_cell
        while needed:
            queue, ptr = state
            if ptr == len(queue):
                queue = indices.copy()
                self.rng.shuffle(queue)
                ptr = 0
            take = min(needed, len(queue) - ptr)
            out.append(queue[ptr:ptr + take])
            state[0], state[1] = queue, ptr + take
            needed -= take
        return np.concatenate(out)


def balanced_batches(dataset, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Iterate one epoch of balanced index batches over a LabeledSet-like dataset."""
    sampler = BalancedBatchSampler(dataset.class_labels, dataset.domain_labels, batch_size, rng,
                                   getattr(dataset, "n_classes", None))
    return iter(sampler)
