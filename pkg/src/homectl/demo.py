"""A small furnished house: five devices, a floor plan, two accounts.

Used by ``homectl serve --demo`` and as a convenient test fixture.
"""

from __future__ import annotations

from .mapcodec import IconRecord, MapScene, Polyline
from .server import Controller
from .sim import (
    air_conditioner,
    door,
    gas_sensor,
    lamp,
    level_ramp,
    presence_sensor,
    presence_toggle,
)

DEMO_ADMIN = ("admin", "opensesame!")
DEMO_GUEST = ("guest", "sparrowhawk!")

WALL_GRAY = (90, 90, 90)


def demo_scene() -> MapScene:
    outline = Polyline(3, WALL_GRAY, ((50, 50), (950, 50), (950, 950), (50, 950), (50, 50)))
    divider = Polyline(2, WALL_GRAY, ((500, 50), (500, 600)))
    return MapScene(
        walls=(outline, divider),
        icons=(
            IconRecord(1, "living lamp", (250, 300), 10),
            IconRecord(2, "front door", (500, 920), 17),
            IconRecord(3, "kitchen gas", (750, 250), 12),
            IconRecord(4, "driveway eye", (120, 880), 15),
            IconRecord(5, "bedroom ac", (800, 700), 12),
            IconRecord(0, "sofa", (300, 500), 3),
        ),
    )


def build_demo_house(controller: Controller, scripted_sensors: bool = True) -> None:
    """Populate a fresh controller with the example fleet, scene and users."""
    fleet = controller.fleet
    fleet.register(lamp(1, "living lamp"))
    fleet.register(door(2, "front door"))
    fleet.register(
        gas_sensor(3, "kitchen gas"),
        script=level_ramp(0.5) if scripted_sensors else None,
    )
    fleet.register(
        presence_sensor(4, "driveway eye"),
        script=presence_toggle(45.0) if scripted_sensors else None,
    )
    fleet.register(air_conditioner(5, "bedroom ac"))
    controller.store.set_scene(demo_scene())
    controller.add_user(*DEMO_ADMIN, role="admin")
    controller.add_user(*DEMO_GUEST, role="mobile", allowed_oids=frozenset({1, 2, 5}))
