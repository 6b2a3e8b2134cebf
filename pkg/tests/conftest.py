"""Shared generators and fixtures."""

from __future__ import annotations

import random

import pytest
from hypothesis import strategies as st

from homectl.mapcodec import IconRecord, MapScene, Polyline


def make_random_scene(rng: random.Random, max_walls: int = 50, max_icons: int = 100) -> MapScene:
    """Seeded random scene within the documented value domains."""
    walls = []
    for _ in range(rng.randint(0, max_walls)):
        points = tuple(
            (rng.randint(0, 1000), rng.randint(0, 1000))
            for _ in range(rng.randint(2, 8))
        )
        walls.append(
            Polyline(
                width=rng.randint(1, 255),
                color=(rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255)),
                points=points,
            )
        )
    icons = []
    alphabet = "abz %|;,\né世%%25"
    for _ in range(rng.randint(0, max_icons)):
        name = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        icons.append(
            IconRecord(
                oid=rng.choice([0, 0, rng.randint(1, 50)]),
                name=name,
                position=(rng.randint(0, 1000), rng.randint(0, 1000)),
                icon_id=rng.randint(0, 30),
            )
        )
    return MapScene(tuple(walls), tuple(icons))


@pytest.fixture
def random_scene():
    return make_random_scene


point_st = st.tuples(st.integers(0, 1000), st.integers(0, 1000))

polyline_st = st.builds(
    Polyline,
    width=st.integers(1, 65535),
    color=st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)),
    points=st.lists(point_st, min_size=2, max_size=6).map(tuple),
)

icon_st = st.builds(
    IconRecord,
    oid=st.integers(0, 99),
    name=st.text(max_size=16),
    position=point_st,
    icon_id=st.integers(0, 40),
)

scene_st = st.builds(
    MapScene,
    walls=st.lists(polyline_st, max_size=6).map(tuple),
    icons=st.lists(icon_st, max_size=8).map(tuple),
)
