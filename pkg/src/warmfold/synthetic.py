"""Synthetic interaction data with known structure."""

from __future__ import annotations

import numpy as np

from .data import InteractionLog, TemporalSplit, from_arrays


def block_dataset(n_users: int = 20, n_items: int = 15, per_user: int = 4, seed: int = 0) -> InteractionLog:
    """Two disjoint communities: the first half of users only touches the first
    half of items (rounded up), the rest only the remaining items."""
    rng = np.random.default_rng(seed)
    half_u, half_i = n_users // 2, (n_items + 1) // 2
    users, items = [], []
    for u in range(n_users):
        lo, hi = (0, half_i) if u < half_u else (half_i, n_items)
        chosen = rng.choice(np.arange(lo, hi), size=min(per_user, hi - lo), replace=False)
        users += [u] * len(chosen)
        items += sorted(chosen.tolist())
    ts = np.arange(len(users))
    return from_arrays(users, items, ts, n_users, n_items)


def block_of_item(item, n_items):
    return np.asarray(item) >= (n_items + 1) // 2


def block_of_user(user, n_users):
    return np.asarray(user) >= n_users // 2


def block_flip_split(n_users: int = 100, n_items: int = 80, train_per_user: int = 10,
                     warm_per_user: int = 20, test_per_user: int = 3, flip_fraction: float = 0.2,
                     seed: int = 0) -> tuple[TemporalSplit, np.ndarray]:
    """Two-community data where some users switch community after training.

    Every user trains on own-block items. Flipped users then interact with
    ``warm_per_user`` items of the other block (warm) and are tested on
    further other-block items; the rest are tested on unseen own-block items.
    Returns the split and the sorted array of flipped users.
    """
    rng = np.random.default_rng(seed)
    half_i = (n_items + 1) // 2
    blocks = [np.arange(0, half_i), np.arange(half_i, n_items)]
    n_flip = max(1, int(round(flip_fraction * n_users)))
    flipped = np.sort(rng.choice(n_users, size=n_flip, replace=False))
    is_flipped = np.zeros(n_users, dtype=bool)
    is_flipped[flipped] = True

    phases = {"train": ([], []), "warm": ([], []), "test": ([], [])}
    for u in range(n_users):
        own = int(block_of_user(u, n_users))
        own_items = rng.permutation(blocks[own])
        train = own_items[:train_per_user]
        phases["train"][0].extend([u] * len(train))
        phases["train"][1].extend(train.tolist())
        if is_flipped[u]:
            other_items = rng.permutation(blocks[1 - own])
            warm = other_items[:warm_per_user]
            test = other_items[warm_per_user : warm_per_user + test_per_user]
            phases["warm"][0].extend([u] * len(warm))
            phases["warm"][1].extend(warm.tolist())
        else:
            test = own_items[train_per_user : train_per_user + test_per_user]
        phases["test"][0].extend([u] * len(test))
        phases["test"][1].extend(test.tolist())

    logs = {}
    offset = 0
    for name in ("train", "warm", "test"):
        us, its = phases[name]
        logs[name] = from_arrays(us, its, np.arange(offset, offset + len(us)), n_users, n_items)
        offset += len(us)
    t1 = len(phases["train"][0]) - 1
    t2 = t1 + len(phases["warm"][0])
    return TemporalSplit(logs["train"], logs["warm"], logs["test"], (t1, t2)), flipped


def latent_factor_log(n_users: int = 6040, n_items: int = 3706, n_events: int = 1_000_209,
                      rank: int = 16, temperature: float = 2.0, zipf_exponent: float = 1.1,
                      drift: float = 0.5, seed: int = 0) -> InteractionLog:
    """Implicit-feedback log drawn from a low-rank preference model.

    Item popularity follows a Zipf law, history lengths are log-normal, each
    user consumes items without repetition, and user tastes drift over time so
    later events are only partly predictable from earlier ones. Defaults match
    the MovieLens-1M shape (users, items, events).
    """
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((n_users, rank)) / np.sqrt(rank)
    p_late = p + drift * rng.standard_normal((n_users, rank)) / np.sqrt(rank)
    q = rng.standard_normal((n_items, rank))
    pop = np.log(np.arange(1, n_items + 1, dtype=np.float64) ** -zipf_exponent)
    pop = pop[rng.permutation(n_items)]

    lengths = rng.lognormal(mean=0.0, sigma=1.0, size=n_users)
    lengths = np.maximum(1, np.round(lengths / lengths.sum() * n_events)).astype(np.int64)
    lengths = np.minimum(lengths, n_items // 2)
    lengths[np.argmax(lengths)] += n_events - lengths.sum()  # exact total
    lengths = np.clip(lengths, 1, n_items)

    starts = rng.uniform(0.0, 0.8, size=n_users)
    spans = rng.uniform(0.05, 0.2, size=n_users)
    users, items, stamps = [], [], []
    for u in range(n_users):
        n = int(lengths[u])
        frac = np.sort(rng.random(n))
        logits = temperature * (q @ (0.5 * (p[u] + p_late[u]))) + pop
        g = logits + rng.gumbel(size=n_items)
        chosen = np.argpartition(-g, n - 1)[:n] if n < n_items else np.arange(n_items)
        # items aligned with the drift direction are consumed last
        chosen = chosen[np.argsort(q[chosen] @ (p_late[u] - p[u]), kind="stable")]
        users.append(np.full(n, u))
        items.append(chosen)
        stamps.append(((starts[u] + spans[u] * frac) * 1e8).astype(np.int64))
    users = np.concatenate(users)
    items = np.concatenate(items)
    stamps = np.concatenate(stamps)
    order = np.argsort(stamps, kind="stable")
    return from_arrays(users[order], items[order], stamps[order], n_users, n_items)
