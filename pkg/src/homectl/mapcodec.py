"""Floor-plan wire codec: wall polylines, icon records, hit testing.

The scene travels as a compact text block.  Wall lines reuse the point
grammar for their own metadata: the first two emitted points pack the line
width and RGB color as four small integers, ``((width, R), (G, B))``, so a
wall with N drawing points is transmitted as N + 2 points.  Icons are
``oid|name|x|y|icon_id`` records; an oid of 0 marks decorative items that
can never be selected.

Positions are abstract integer pixels on a 0..1000 square canvas; clients
scale to their viewport.  Walls are open polylines, never auto-closed.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import SCHEMA_CODES, DeviceState

__all__ = [
    "MAX_WIDTH",
    "SceneError",
    "Polyline",
    "IconRecord",
    "MapScene",
    "pack_header",
    "unpack_header",
    "encode_scene",
    "decode_scene",
    "hit_test",
    "icon_for",
    "escape_field",
    "unescape_field",
]

# Width shares a point coordinate with the R channel; 16 bits keeps the
# packing bijective while allowing chunky walls.
MAX_WIDTH = 65535

_FIELD_SEPARATORS = "%|;,"


class SceneError(ValueError):
    """Malformed scene text.  ``line_no`` is 1-based when known."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def escape_field(text: str) -> str:
    """Percent-escape the separator characters and anything unprintable."""
    out: list[str] = []
    for ch in text:
        if ch in _FIELD_SEPARATORS or not ch.isprintable():
            out.extend(f"%{b:02X}" for b in ch.encode("utf-8"))
        else:
            out.append(ch)
    return "".join(out)


def unescape_field(text: str) -> str:
    """Inverse of :func:`escape_field`; tolerates unescaped safe chars."""
    hexdigits = "0123456789abcdefABCDEF"
    buf = bytearray()
    i = 0
    while i < len(text):
        ch = text[i]
        if (
            ch == "%"
            and i + 3 <= len(text)
            and text[i + 1] in hexdigits
            and text[i + 2] in hexdigits
        ):
            buf.append(int(text[i + 1 : i + 3], 16))
            i += 3
        else:
            buf.extend(ch.encode("utf-8"))
            i += 1
    return buf.decode("utf-8", errors="replace")


@dataclass(frozen=True)
class Polyline:
    """Wall segment chain: width, color and at least two drawing points."""

    width: int
    color: tuple[int, int, int]
    points: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class IconRecord:
    """Positioned glyph; oid 0 marks decorative, non-controllable items."""

    oid: int
    name: str
    position: tuple[int, int]
    icon_id: int


@dataclass(frozen=True)
class MapScene:
    walls: tuple[Polyline, ...] = ()
    icons: tuple[IconRecord, ...] = ()


def pack_header(width: int, color: tuple[int, int, int]) -> tuple[tuple[int, int], tuple[int, int]]:
    """Fold (width, R, G, B) into the two leading points of a wall line."""
    r, g, b = color
    if not 1 <= width <= MAX_WIDTH:
        raise ValueError(f"width {width} out of range 1..{MAX_WIDTH}")
    for channel in (r, g, b):
        if not 0 <= channel <= 255:
            raise ValueError(f"color channel {channel} out of range 0..255")
    return (width, r), (g, b)


def unpack_header(p1: tuple[int, int], p2: tuple[int, int]) -> tuple[int, tuple[int, int, int]]:
    """Inverse of :func:`pack_header`."""
    width, r = p1
    g, b = p2
    if width < 1:
        raise ValueError(f"malformed header: width {width} < 1")
    for channel in (r, g, b):
        if not 0 <= channel <= 255:
            raise ValueError(f"malformed header: channel {channel} out of range 0..255")
    return width, (r, g, b)


def _encode_wall(wall: Polyline) -> str:
    header = pack_header(wall.width, wall.color)
    if len(wall.points) < 2:
        raise ValueError("polyline needs at least 2 drawing points")
    pts = list(header) + list(wall.points)
    return ";".join(f"{x},{y}" for x, y in pts)


def _encode_icon(icon: IconRecord) -> str:
    x, y = icon.position
    return f"{icon.oid}|{escape_field(icon.name)}|{x}|{y}|{icon.icon_id}"


def encode_scene(scene: MapScene) -> str:
    """Emit the scene text block: ``#WALLS`` lines then ``#ICONS`` lines."""
    lines = ["#WALLS"]
    lines.extend(_encode_wall(w) for w in scene.walls)
    lines.append("#ICONS")
    lines.extend(_encode_icon(i) for i in scene.icons)
    return "\n".join(lines) + "\n"


def _parse_point(token: str, line_no: int) -> tuple[int, int]:
    parts = token.split(",")
    if len(parts) != 2:
        raise SceneError(f"bad point {token!r}", line_no)
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise SceneError(f"bad point {token!r}", line_no) from None


def _parse_wall(line: str, line_no: int) -> Polyline:
    tokens = [t for t in line.split(";") if t != ""]
    points = [_parse_point(t, line_no) for t in tokens]
    if len(points) < 4:
        raise SceneError("truncated polyline (needs header + 2 drawing points)", line_no)
    try:
        width, color = unpack_header(points[0], points[1])
    except ValueError as exc:
        raise SceneError(str(exc), line_no) from None
    return Polyline(width, color, tuple(points[2:]))


def _parse_icon(line: str, line_no: int) -> IconRecord:
    parts = line.split("|")
    if len(parts) != 5:
        raise SceneError(f"icon record needs 5 fields, got {len(parts)}", line_no)
    try:
        oid = int(parts[0])
        x = int(parts[2])
        y = int(parts[3])
        icon_id = int(parts[4])
    except ValueError:
        raise SceneError("icon numeric field is not an integer", line_no) from None
    if oid < 0:
        raise SceneError(f"icon oid {oid} < 0", line_no)
    if icon_id < 0:
        raise SceneError(f"icon id {icon_id} < 0", line_no)
    return IconRecord(oid, unescape_field(parts[1]), (x, y), icon_id)


def decode_scene(text: str) -> MapScene:
    """Parse a scene text block; raises :class:`SceneError` with the line."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != "#WALLS":
        raise SceneError("expected #WALLS header", 1)
    walls: list[Polyline] = []
    icons: list[IconRecord] = []
    section = "walls"
    for idx, line in enumerate(lines[1:], start=2):
        if line == "#ICONS":
            if section == "icons":
                raise SceneError("duplicate #ICONS header", idx)
            section = "icons"
        elif section == "walls":
            walls.append(_parse_wall(line, idx))
        else:
            icons.append(_parse_icon(line, idx))
    if section != "icons":
        raise SceneError("missing #ICONS header", len(lines))
    return MapScene(tuple(walls), tuple(icons))


def hit_test(scene: MapScene, click: tuple[int, int], radius: int) -> IconRecord | None:
    """Nearest selectable icon within ``radius`` of the click, or None.

    Icons with oid 0 are invisible to selection; distance ties break toward
    the lowest oid so repeated clicks resolve deterministically.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    cx, cy = click
    best: IconRecord | None = None
    best_key: tuple[int, int] | None = None
    for icon in scene.icons:
        if icon.oid == 0:
            continue
        dx = icon.position[0] - cx
        dy = icon.position[1] - cy
        d2 = dx * dx + dy * dy
        if d2 > radius * radius:
            continue
        key = (d2, icon.oid)
        if best_key is None or key < best_key:
            best, best_key = icon, key
    return best


# Live icon ids, one per (schema, discrete status).  Ids below 10 are left
# free for decorative glyphs chosen by scene authors.
ICON_TABLE: dict[tuple[str, str], int] = {
    ("on_off", "off"): 10,
    ("on_off", "on"): 11,
    ("leveled", "low"): 12,
    ("leveled", "mid"): 13,
    ("leveled", "high"): 14,
    ("presence", "absent"): 15,
    ("presence", "present"): 16,
    ("open_closed", "closed"): 17,
    ("open_closed", "open"): 18,
}


def level_band(level: int) -> str:
    """Quantize a 0..100 level into the three display bands."""
    if level <= 33:
        return "low"
    if level <= 66:
        return "mid"
    return "high"


def icon_for(schema: str, state: DeviceState) -> int:
    """Deterministic live icon id for a device state under its schema."""
    if schema not in SCHEMA_CODES or not state.matches_schema(schema):
        raise ValueError(f"state {state!r} does not match schema {schema!r}")
    if schema == "leveled":
        return ICON_TABLE[("leveled", level_band(state.level))]  # type: ignore[arg-type]
    return ICON_TABLE[(schema, state.status_code)]


def render_ascii(scene: MapScene, cols: int = 60, rows: int = 24) -> str:
    """Debug render of a decoded scene onto a character grid."""
    grid = [[" "] * cols for _ in range(rows)]

    def plot(x: int, y: int, ch: str) -> None:
        gx = min(cols - 1, max(0, x * (cols - 1) // 1000))
        gy = min(rows - 1, max(0, y * (rows - 1) // 1000))
        grid[gy][gx] = ch

    for wall in scene.walls:
        for (x0, y0), (x1, y1) in zip(wall.points, wall.points[1:]):
            steps = max(abs(x1 - x0), abs(y1 - y0), 1)
            for i in range(steps + 1):
                plot(x0 + (x1 - x0) * i // steps, y0 + (y1 - y0) * i // steps, "#")
    for icon in scene.icons:
        mark = "." if icon.oid == 0 else str(icon.oid % 10)
        plot(icon.position[0], icon.position[1], mark)
    return "\n".join("".join(row).rstrip() for row in grid)
