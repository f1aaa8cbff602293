"""Counter-based random streams.

Every random number used by a simulation is a pure function of
``(seed, path_id, tag, step, draw)``.  This is what makes path ``i`` of an
ensemble reproducible from ``(master_seed, i)`` alone, independently of how
many paths are simulated or how the work is split between workers.

Two access patterns are served:

* addressed draws (:meth:`CounterRNG.uniform`, :meth:`CounterRNG.normal`, ...)
  evaluate the Philox4x32-10 block function vectorised over many
  ``(path, step)`` counters at once.  Used for initial states, jump clocks,
  directions and anything drawn a few times per path.
* driver streams (:meth:`CounterRNG.normal_stream`) read long runs of
  Brownian increments from one Philox4x64-10 stream per path (numpy's
  implementation), keyed by ``(seed, tag, path_id)``; step ``k`` of an
  ``m``-dimensional driver reads the words ``[k m', (k + 1) m')`` with ``m'``
  the even number ``>= m``.
"""
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)

# Stream tags. Distinct purposes never share counters.
TAG_DRIVER = 0
TAG_INITIAL = 1
TAG_BOOTSTRAP = 2
TAG_BRANCH = 3
TAG_CLOCK = 4
TAG_DIRECTION = 5
TAG_NOISE = 6
TAG_CLOUD = 7
TAG_PROBE = 8
TAG_AUX = 9

_ID_BITS = 56
_TWO_PI = 2.0 * np.pi


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Philox4x32 block function on broadcastable uint32-valued arrays.

    Returns four uint64 arrays holding the 32-bit output words.
    """
    c0, c1, c2, c3, k0, k1 = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.uint64) & _MASK for v in (c0, c1, c2, c3, k0, k1))
    )
    c0, c1, c2, c3 = c0.copy(), c1.copy(), c2.copy(), c3.copy()
    k0, k1 = k0.copy(), k1.copy()
    for r in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        if r < rounds - 1:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


def _unit_interval(a, b):
    # 53-bit uniform on the open interval (0, 1) from two 32-bit words.
    u = ((a >> np.uint64(5)).astype(np.float64) * 67108864.0
         + (b >> np.uint64(6)).astype(np.float64))
    return (u + 0.5) / 9007199254740992.0


def _word_to_unit(w):
    # 53-bit uniform on (0, 1) from one 64-bit word.
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _box_muller(u):
    # Pairs (u[2j], u[2j+1]) along the last axis -> two standard normals.
    r = np.sqrt(-2.0 * np.log(u[..., 0::2]))
    phase = _TWO_PI * u[..., 1::2]
    z = np.empty_like(u)
    z[..., 0::2] = r * np.cos(phase)
    z[..., 1::2] = r * np.sin(phase)
    return z


class CounterRNG:
    """Deterministic random streams keyed by ``seed`` and indexed by path.

    Parameters
    ----------
    seed : int
        Non-negative master seed, less than ``2**64``.

    Notes
    -----
    An addressed draw is located by ``(path_id, tag, step, draw)``; ``step``
    is the time-step (or event) counter and ``draw`` enumerates the variates
    used at that step.  Path ids must be below ``2**32`` for addressed draws
    and below ``2**56`` for driver streams.
    """

    def __init__(self, seed):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be in [0, 2**64), got {seed}")
        self.seed = seed
        self._seed_lo = np.uint64(seed & 0xFFFFFFFF)
        self._seed_hi = np.uint64(seed >> 32)

    def __repr__(self):
        return f"CounterRNG(seed={self.seed})"

    def _blocks(self, ids, tag, steps, n_pairs):
        ids = np.asarray(ids, dtype=np.uint64).reshape(-1, 1, 1)
        steps = np.asarray(steps, dtype=np.uint64).reshape(1, -1, 1)
        pair = np.arange(n_pairs, dtype=np.uint64).reshape(1, 1, -1)
        # Counter: (step, pair, tag, seed_hi); key: (path_id, seed_lo).
        return philox4x32(steps, pair, np.uint64(tag), self._seed_hi, ids, self._seed_lo)

    def uniform(self, ids, steps, n, tag=TAG_AUX):
        """Uniforms on (0, 1) of shape ``(len(ids), len(steps), n)``."""
        steps = np.atleast_1d(steps)
        w0, w1, w2, w3 = self._blocks(ids, tag, steps, (n + 1) // 2)
        u = np.stack([_unit_interval(w0, w1), _unit_interval(w2, w3)], axis=-1)
        return u.reshape(u.shape[0], u.shape[1], -1)[..., :n]

    def normal(self, ids, steps, n, tag=TAG_AUX):
        """Standard normals of shape ``(len(ids), len(steps), n)`` (Box-Muller)."""
        steps = np.atleast_1d(steps)
        w0, w1, w2, w3 = self._blocks(ids, tag, steps, (n + 1) // 2)
        u1 = _unit_interval(w0, w1)
        u2 = _unit_interval(w2, w3)
        r = np.sqrt(-2.0 * np.log(u1))
        phase = _TWO_PI * u2
        z = np.stack([r * np.cos(phase), r * np.sin(phase)], axis=-1)
        return z.reshape(z.shape[0], z.shape[1], -1)[..., :n]

    def exponential(self, ids, steps, n, tag=TAG_CLOCK):
        """Rate-one exponentials of shape ``(len(ids), len(steps), n)``."""
        return -np.log(self.uniform(ids, steps, n, tag=tag))

    def unit_directions(self, ids, steps, dim, tag=TAG_DIRECTION):
        """Uniform points on the unit sphere in ``R^dim``."""
        z = self.normal(ids, steps, dim, tag=tag)
        return z / np.linalg.norm(z, axis=-1, keepdims=True)

    def bit_generator(self, path_id, tag=TAG_DRIVER, word=0):
        """numpy Philox4x64 stream of ``(path_id, tag)`` at block ``word // 4``."""
        path_id, tag = int(path_id), int(tag)
        if not (0 <= path_id < 2**_ID_BITS and 0 <= tag < 256):
            raise ValueError("path id or tag out of range")
        key = np.array([self.seed, (tag << _ID_BITS) | path_id], dtype=np.uint64)
        counter = np.array([word // 4, 0, 0, 0], dtype=np.uint64)
        return np.random.Philox(key=key, counter=counter)

    def normal_stream(self, ids, n, start_step=0, tag=TAG_DRIVER):
        """Sequential reader of ``n`` normals per step, starting at ``start_step``."""
        return NormalStream(self, ids, n, start_step, tag)


class NormalStream:
    """Consecutive steps of normals from persistent per-path driver streams.

    ``take(k)`` returns the next ``k`` steps with shape ``(len(ids), k, n)``.
    A stream opened at step ``s`` yields exactly the numbers that a stream
    opened at 0 yields after ``s`` steps, so runs can be split in time.
    """

    def __init__(self, rng, ids, n, start_step=0, tag=TAG_DRIVER):
        self.n = int(n)
        self._per = self.n + (self.n & 1)
        start = int(start_step) * self._per
        self._gens = [rng.bit_generator(i, tag, start) for i in np.atleast_1d(np.asarray(ids))]
        skip = start % 4
        if skip:
            for g in self._gens:
                g.random_raw(skip)

    def __len__(self):
        return len(self._gens)

    def take(self, k):
        count = k * self._per
        w = np.empty((len(self._gens), count), dtype=np.uint64)
        for j, g in enumerate(self._gens):
            w[j] = g.random_raw(count)
        z = _box_muller(_word_to_unit(w.reshape(len(self._gens), k, self._per)))
        return z[..., :self.n]
