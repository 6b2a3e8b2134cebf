"""Floor-plan codec: packing, round-trips, hit testing, live icons."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_random_scene, scene_st
from homectl.mapcodec import (
    ICON_TABLE,
    IconRecord,
    MapScene,
    Polyline,
    SceneError,
    decode_scene,
    encode_scene,
    escape_field,
    hit_test,
    icon_for,
    pack_header,
    render_ascii,
    unescape_field,
    unpack_header,
)
from homectl.model import DeviceState


class TestHeaderPacking:
    def test_pack_example(self):
        assert pack_header(3, (255, 128, 0)) == ((3, 255), (128, 0))

    def test_pack_identity_like(self):
        assert pack_header(1, (0, 0, 0)) == ((1, 0), (0, 0))

    def test_unpack_examples(self):
        assert unpack_header((3, 255), (128, 0)) == (3, (255, 128, 0))
        assert unpack_header((1, 0), (0, 0)) == (1, (0, 0, 0))

    def test_zero_width_is_malformed(self):
        with pytest.raises(ValueError, match="width"):
            unpack_header((0, 5), (5, 5))

    @pytest.mark.parametrize("width", [0, -1, 65536])
    def test_pack_width_range(self, width):
        with pytest.raises(ValueError, match="width"):
            pack_header(width, (0, 0, 0))

    @pytest.mark.parametrize("color", [(-1, 0, 0), (0, 256, 0), (0, 0, 999)])
    def test_pack_channel_range(self, color):
        with pytest.raises(ValueError, match="channel"):
            pack_header(1, color)

    def test_unpack_channel_range(self):
        with pytest.raises(ValueError, match="channel"):
            unpack_header((1, 300), (0, 0))

    def test_round_trip_1000_random(self):
        rng = random.Random(20211)
        for _ in range(1000):
            width = rng.randint(1, 65535)
            color = (rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255))
            assert unpack_header(*pack_header(width, color)) == (width, color)

    def test_bijective_no_collisions(self):
        # injectivity over a dense sample of the packing domain
        seen = set()
        rng = random.Random(7)
        for _ in range(2000):
            width = rng.randint(1, 65535)
            color = (rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255))
            packed = pack_header(width, color)
            if (width, color) in seen:
                continue
            seen.add((width, color))
            assert packed == ((width, color[0]), (color[1], color[2]))


class TestEscaping:
    @given(st.text(max_size=40))
    def test_round_trip(self, text):
        assert unescape_field(escape_field(text)) == text

    @given(st.text(max_size=40))
    def test_escaped_form_is_printable_and_separator_free(self, text):
        escaped = escape_field(text)
        assert escaped.isprintable() or escaped == ""
        for sep in "|;,\n":
            assert sep not in escaped


class TestSceneCodec:
    def test_empty_scene_exact_bytes(self):
        assert encode_scene(MapScene()) == "#WALLS\n#ICONS\n"

    def test_single_wall_exact_bytes(self):
        scene = MapScene(walls=(Polyline(2, (255, 0, 0), ((0, 0), (10, 0))),))
        assert encode_scene(scene) == "#WALLS\n2,255;0,0;0,0;10,0\n#ICONS\n"

    def test_decode_empty(self):
        assert decode_scene("#WALLS\n#ICONS\n") == MapScene()

    def test_header_only_wall_is_truncated(self):
        with pytest.raises(SceneError, match="truncated"):
            decode_scene("#WALLS\n2,255;0,0\n#ICONS\n")

    def test_three_point_wall_is_truncated(self):
        with pytest.raises(SceneError, match="truncated"):
            decode_scene("#WALLS\n2,255;0,0;5,5\n#ICONS\n")

    def test_decorative_icon_decodes(self):
        scene = decode_scene("#WALLS\n#ICONS\n0|sofa|40|60|17\n")
        assert scene.icons == (IconRecord(0, "sofa", (40, 60), 17),)

    def test_error_carries_line_number(self):
        with pytest.raises(SceneError) as err:
            decode_scene("#WALLS\n1,0;0,0;0,1;1,1\nbogus\n#ICONS\n")
        assert err.value.line_no == 3

    def test_missing_walls_header(self):
        with pytest.raises(SceneError, match="WALLS"):
            decode_scene("#ICONS\n")

    def test_missing_icons_header(self):
        with pytest.raises(SceneError, match="ICONS"):
            decode_scene("#WALLS\n")

    def test_malformed_header_rejected(self):
        # width 0 in the packed header
        with pytest.raises(SceneError, match="width"):
            decode_scene("#WALLS\n0,5;5,5;0,0;1,1\n#ICONS\n")
        with pytest.raises(SceneError, match="channel"):
            decode_scene("#WALLS\n1,999;5,5;0,0;1,1\n#ICONS\n")

    def test_round_trip_seeded_random(self):
        rng = random.Random(99)
        for _ in range(200):
            scene = make_random_scene(rng, max_walls=8, max_icons=12)
            assert decode_scene(encode_scene(scene)) == scene

    @settings(max_examples=200)
    @given(scene_st)
    def test_round_trip_property(self, scene):
        assert decode_scene(encode_scene(scene)) == scene

    @given(scene_st)
    def test_output_printable(self, scene):
        for line in encode_scene(scene).split("\n")[:-1]:
            assert line.isprintable() or line == ""

    def test_emitted_points_are_drawing_points_plus_two(self):
        scene = MapScene(walls=(Polyline(1, (1, 2, 3), ((0, 0), (1, 1), (2, 2))),))
        wall_line = encode_scene(scene).split("\n")[1]
        assert wall_line.count(";") == 4  # 5 emitted points


class TestHitTest:
    def test_within_radius(self):
        icon = IconRecord(5, "lamp", (10, 10), 11)
        scene = MapScene(icons=(icon,))
        assert hit_test(scene, (12, 11), 8) is icon

    def test_decorative_invisible_to_selection(self):
        scene = MapScene(icons=(IconRecord(0, "sofa", (10, 10), 3),))
        assert hit_test(scene, (10, 10), 8) is None

    def test_tie_breaks_to_lowest_oid(self):
        icons = (
            IconRecord(7, "a", (10, 10), 1),
            IconRecord(3, "b", (10, 10), 1),
        )
        result = hit_test(MapScene(icons=icons), (10, 10), 5)
        assert result is not None and result.oid == 3

    def test_outside_radius(self):
        scene = MapScene(icons=(IconRecord(5, "lamp", (10, 10), 11),))
        assert hit_test(scene, (100, 100), 8) is None

    def test_boundary_inclusive(self):
        scene = MapScene(icons=(IconRecord(5, "lamp", (10, 10), 11),))
        assert hit_test(scene, (10, 18), 8) is not None

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            hit_test(MapScene(), (0, 0), -1)

    @given(
        icons=st.lists(
            st.builds(
                IconRecord,
                oid=st.integers(0, 9),
                name=st.just("x"),
                position=st.tuples(st.integers(0, 50), st.integers(0, 50)),
                icon_id=st.just(1),
            ),
            max_size=8,
        ).map(tuple),
        click=st.tuples(st.integers(0, 50), st.integers(0, 50)),
        radius=st.integers(0, 60),
    )
    def test_never_returns_decorative(self, icons, click, radius):
        result = hit_test(MapScene(icons=icons), click, radius)
        assert result is None or result.oid != 0


class TestIconFor:
    def test_door_statuses_distinct(self):
        closed = icon_for("open_closed", DeviceState(9, "closed", None, 0.0))
        opened = icon_for("open_closed", DeviceState(9, "open", None, 0.0))
        assert closed != opened

    def test_level_extremes_distinct(self):
        low = icon_for("leveled", DeviceState(3, "level", 0, 0.0))
        high = icon_for("leveled", DeviceState(3, "level", 100, 0.0))
        assert low != high

    def test_deterministic(self):
        state = DeviceState(1, "on", None, 0.0)
        assert icon_for("on_off", state) == icon_for("on_off", state)

    def test_bands(self):
        ids = {
            icon_for("leveled", DeviceState(3, "level", lvl, 0.0))
            for lvl in (0, 33, 34, 66, 67, 100)
        }
        assert len(ids) == 3

    def test_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            icon_for("on_off", DeviceState(1, "open", None, 0.0))

    def test_all_pairs_distinct(self):
        values = list(ICON_TABLE.values())
        assert len(values) == len(set(values))


def test_render_ascii_smoke():
    scene = MapScene(
        walls=(Polyline(1, (0, 0, 0), ((0, 0), (1000, 0))),),
        icons=(IconRecord(4, "eye", (500, 500), 15),),
    )
    art = render_ascii(scene, cols=20, rows=10)
    assert "#" in art and "4" in art
