"""Named, independently seeded random streams derived from one master seed.

Every consumer of randomness asks for a stream by name, so adding a new
consumer never perturbs the draws seen by existing ones.
"""
from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(master_seed: int, name: str) -> int:
    """A 63-bit integer seed for ``name``, stable across processes."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(_name_key(name),))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


class RngStreams:
    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = np.random.default_rng(derive_seed(self.master_seed, name))
        return self._streams[name]

    def seed_for(self, name: str) -> int:
        return derive_seed(self.master_seed, name)

    def names(self) -> list[str]:
        return sorted(self._streams)

    def state_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "streams": {k: g.bit_generator.state for k, g in sorted(self._streams.items())},
        }

    def load_state_dict(self, state: dict) -> None:
        self.master_seed = int(state["master_seed"])
        self._streams = {}
        for name, bg_state in state["streams"].items():
            gen = np.random.default_rng(0)
            gen.bit_generator.state = bg_state
            self._streams[name] = gen


def generator_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def generator_from_state(state: dict) -> np.random.Generator:
    gen = np.random.default_rng(0)
    gen.bit_generator.state = state
    return gen
