"""Schedule and rule execution: time triggers, condition gates, auto-disable.

The engine ticks on the simulator's logical thread.  It only reads store
snapshots and enqueues dispatches; device state is never mutated here.
Rules are edge-triggered: a firing happens on the false-to-true transition
of the conjunction and not again until it has been false, which keeps a
condition that stays true from storming the actuators every tick.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

from .model import Condition
from .store import Snapshot, Store

__all__ = ["GRACE_SECONDS", "FiredAction", "eval_condition", "edge_policy", "AutomationEngine"]

logger = logging.getLogger("homectl.engine")

GRACE_SECONDS = 300.0  # missed time-of-day triggers older than this are skipped

DispatchFn = Callable[[int, str, str], None]


@dataclass(frozen=True)
class FiredAction:
    source: str  # "schedule" | "rule"
    source_id: str
    oid: int
    action: str
    arg: str


def eval_condition(cond: Condition, snap: Snapshot) -> bool:
    """Compare the snapshot's state field with the operand.

    Unknown oids and schema mismatches evaluate false with a logged
    diagnostic; the owning rule stays enabled.
    """
    state = snap.states.get(cond.oid)
    if state is None:
        logger.warning("condition references oid %s with no state", cond.oid)
        return False
    if cond.field == "status":
        if cond.comparator == "=":
            return state.status_code == cond.operand
        if cond.comparator == "!=":
            return state.status_code != cond.operand
        logger.warning("ordering comparator %s on status field", cond.comparator)
        return False
    if cond.field == "level":
        if state.level is None:
            logger.warning("condition reads level of non-leveled oid %s", cond.oid)
            return False
        if not isinstance(cond.operand, int):
            logger.warning("level condition with non-integer operand %r", cond.operand)
            return False
        value, operand = state.level, cond.operand
        if cond.comparator == "=":
            return value == operand
        if cond.comparator == "!=":
            return value != operand
        if cond.comparator == "<":
            return value < operand
        if cond.comparator == "<=":
            return value <= operand
        if cond.comparator == ">":
            return value > operand
        if cond.comparator == ">=":
            return value >= operand
        logger.warning("unknown comparator %r", cond.comparator)
        return False
    logger.warning("unknown condition field %r", cond.field)
    return False


def edge_policy(prev_value: bool | None, current: bool) -> bool:
    """Fire on the false-to-true edge.

    ``prev_value`` is None for a freshly enabled rule, which counts as an
    edge when the conjunction is already true: the rule acts on the state
    it was enabled into.
    """
    return current and prev_value is not True


class AutomationEngine:
    """Evaluates schedules then rules each tick, in id order."""

    def __init__(
        self,
        store: Store,
        dispatch: DispatchFn,
        start_now: float = 0.0,
        grace: float = GRACE_SECONDS,
    ):
        self._store = store
        self._dispatch = dispatch
        self._grace = grace
        # triggers missed while down fire on restart only inside the grace window
        self._prev_now = start_now - grace
        self._rule_edges: dict[str, bool] = {}

    def _schedule_due(self, when: str, now: float) -> bool:
        if when == "now":
            return True
        hh, mm = when.split(":")
        target = int(hh) * 3600 + int(mm) * 60
        # most recent occurrence of the time-of-day at or before `now`
        k = math.floor((now - target) / 86400.0)
        candidate = k * 86400.0 + target
        if candidate <= self._prev_now or candidate > now:
            return False
        if now - candidate > self._grace:
            logger.warning("time-of-day trigger %s missed by more than grace; skipped", when)
            return False
        return True

    def _fire(self, fired: list[FiredAction], source: str, source_id: str,
              oid: int, action: str, arg: str) -> None:
        try:
            self._dispatch(oid, action, arg)
        except Exception:
            logger.exception("dispatch failed for %s %s -> oid %s %s", source, source_id, oid, action)
        fired.append(FiredAction(source, source_id, oid, action, arg))

    def tick(self, now: float) -> list[FiredAction]:
        """One evaluation pass; returns the actions fired this tick."""
        snap = self._store.snapshot()
        fired: list[FiredAction] = []

        for task_id in sorted(snap.schedules):
            task = snap.schedules[task_id]
            if not task.enabled:
                continue
            if not self._schedule_due(task.when, now):
                continue
            if not all(eval_condition(c, snap) for c in task.criteria):
                continue
            self._fire(fired, "schedule", task.id, task.oid, task.action, task.arg)
            # one-shot: executed tasks are disabled, never deleted
            self._store.set_schedule_enabled(task.id, False)

        for rule_id in sorted(snap.rules):
            rule = snap.rules[rule_id]
            if not rule.enabled:
                self._rule_edges.pop(rule_id, None)
                continue
            value = all(eval_condition(c, snap) for c in rule.conditions)
            if edge_policy(self._rule_edges.get(rule_id), value):
                for oid, action, arg in rule.actions:
                    self._fire(fired, "rule", rule.id, oid, action, arg)
            self._rule_edges[rule_id] = value

        # forget rules that were deleted outright
        for known in list(self._rule_edges):
            if known not in snap.rules:
                del self._rule_edges[known]

        self._prev_now = now
        return fired
