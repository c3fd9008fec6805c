"""Feature-poisoning attacks on linear least-squares solvers and the tools to
measure their effect."""

__version__ = "0.1.0"
