"""homectl: a self-contained home remote-control plane.

Control server with a terse line-oriented gateway, expiring-salt request
authentication, a compact floor-plan codec, a simulated device fleet with
tiered polling, a schedule/rule engine, and a scriptable client.
"""

__version__ = "0.1.0"
