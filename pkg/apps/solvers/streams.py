import numpy as np

CHUNK_SIZE = 4096


class IndexStream:
    """
    Uniform component indices for one replication. The substream is keyed by
    (master_seed, replication) on a Philox counter generator, so any replication can be
    regenerated on its own and in any order.
    """

    def __init__(self, seed, replication, n):
        if not 1 <= n < 2**32:
            raise ValueError("component count must be in [1, 2**32)")
        sequence = np.random.SeedSequence([int(seed), int(replication)])
        self.bit_generator = np.random.Philox(sequence)
        self.n = np.uint64(n)

    def draw(self, count):
        """The next ``count`` indices, independent of how earlier draws were chunked."""
        raw = self.bit_generator.random_raw(count)
        # Upper 32 bits scaled to [0, n): one raw word per index, no rejection loop.
        return ((raw >> np.uint64(32)) * self.n >> np.uint64(32)).astype(np.int64)
