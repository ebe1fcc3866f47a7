"""Sandboxed notebook-style execution kernel.

One process serves one session: cells arrive as JSON lines on stdin, each
answered by exactly one result line on stdout carrying status, captured
logs, the last expression's value, and any files the cell produced in its
workspace. Isolation is enforced in-process (audit hooks, import guard,
wall-clock alarm) and the process never crashes on hostile cells.
"""

__version__ = "0.1.0"
