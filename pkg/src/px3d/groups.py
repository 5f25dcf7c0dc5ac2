"""Semantic grouping of patch triplets and proxy budget apportionment.

Groups collect every triplet sharing an object label. The token budget K is
split across groups proportionally to group size (largest-remainder style)
under two hard constraints: every group keeps at least min(k_min, size)
proxies so no instance is overlooked, and no group can receive more proxies
than it has members.

The apportionment is computed as a greedy fill over integer marginal costs
|a*L - K*size| so results are exact (no float ties) and provably minimize
the total deviation from proportionality. Ties go to the larger group, then
to the smaller label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BudgetTooSmall
from .patchgrid import PatchTriplet


@dataclass
class SemanticGroup:
    label: int
    members: list[PatchTriplet]
    allocated: int | None = None

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class GroupAllocation:
    label: int
    size: int
    allocated: int


@dataclass
class AllocationPlan:
    entries: list[GroupAllocation]
    requested_k: int
    k_min: int
    achieved_k: int = field(init=False)

    def __post_init__(self):
        self.achieved_k = sum(e.allocated for e in self.entries)

    def allocations(self) -> list[int]:
        return [e.allocated for e in self.entries]


def group_by_label(triplets: list[PatchTriplet]) -> list[SemanticGroup]:
    """Partition triplets by label, groups sorted by ascending label."""
    buckets: dict[int, list[PatchTriplet]] = {}
    for t in triplets:
        if t.label < 0:
            raise ValueError(f"triplet labels must be >= 0, got {t.label}")
        buckets.setdefault(t.label, []).append(t)
    return [SemanticGroup(label, buckets[label]) for label in sorted(buckets)]


def allocate_proxies(group_sizes, budget: int, k_min: int = 1,
                     labels=None, overrides=None) -> AllocationPlan:
    """Apportion `budget` proxies across groups proportionally to size.

    overrides maps a label to its own minimum proxy count (used to target
    specific objects with extra resolution). Raises BudgetTooSmall when the
    per-group minimums alone exceed the budget.
    """
    sizes = [int(s) for s in group_sizes]
    if any(s < 1 for s in sizes):
        raise ValueError("group sizes must be >= 1")
    if k_min < 1:
        raise ValueError(f"k_min must be >= 1, got {k_min}")
    if labels is None:
        labels = list(range(len(sizes)))
    labels = [int(l) for l in labels]
    if len(labels) != len(sizes):
        raise ValueError("labels and group_sizes length mismatch")
    overrides = dict(overrides or {})

    g = len(sizes)
    total = sum(sizes)
    lo = [min(overrides.get(lab, k_min), sz) for lab, sz in zip(labels, sizes)]
    need = sum(lo)
    if budget < need:
        raise BudgetTooSmall(
            f"budget {budget} cannot cover per-group minimums (sum {need} "
            f"over {g} groups)")

    target = min(budget, total)
    alloc = list(lo)
    # Deviation of one group from exact proportionality, scaled by L to stay
    # in integers: |a*L - K*size|.
    def step_cost(i: int, a: int) -> int:
        return abs((a + 1) * total - budget * sizes[i]) - abs(a * total - budget * sizes[i])

    remaining = target - sum(alloc)
    open_groups = [i for i in range(g) if alloc[i] < sizes[i]]
    while remaining > 0:
        best = min(open_groups,
                   key=lambda i: (step_cost(i, alloc[i]), -sizes[i], labels[i]))
        alloc[best] += 1
        remaining -= 1
        if alloc[best] == sizes[best]:
            open_groups.remove(best)

    entries = [GroupAllocation(lab, sz, a)
               for lab, sz, a in zip(labels, sizes, alloc)]
    return AllocationPlan(entries, requested_k=budget, k_min=k_min)
