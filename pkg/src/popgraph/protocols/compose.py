"""Fast protocol with an always-correct backup, switched by an epidemic signal."""

from __future__ import annotations

from typing import Callable, Sequence

from ..engine import AsyncProtocol

FAST, BACKUP = 0, 1


class Trigger:
    """Decides, after a fast-mode interaction, which participants switch to backup.

    ``fires(before_u, after_u, before_v, after_v, out_u, out_v)`` receives the
    fast states before and after the step and the outputs after it, and
    returns a pair of flags.
    """

    name = "never"

    def fires(self, bu, au, bv, av, out_u, out_v) -> tuple[bool, bool]:
        return False, False

    def quiescent(self, fast: AsyncProtocol, states: Sequence) -> bool:
        """True when the fast states are final and the trigger can never fire again."""
        return bool(fast.is_stable(states))


class NeverTrigger(Trigger):
    name = "never"


class BudgetTrigger(Trigger):
    """A node switches at its first clock reset after simulating all ``R`` rounds.

    Works on wrapped states ``(c, tokens, a, r)``.
    """

    name = "budget"

    def __init__(self, phi: int, R: int):
        self.phi, self.R = phi, R

    def _one(self, before, after) -> bool:
        return before[3] == self.R and before[0] == self.phi - 1 and after[0] == 0

    def fires(self, bu, au, bv, av, out_u, out_v):
        return self._one(bu, au), self._one(bv, av)

    def quiescent(self, fast, states):
        return False


class DisagreementTrigger(Trigger):
    """Both participants finished all ``R`` rounds but output different values."""

    name = "disagreement"

    def __init__(self, R: int):
        self.R = R

    def fires(self, bu, au, bv, av, out_u, out_v):
        hit = au[3] == self.R and av[3] == self.R and out_u != out_v
        return hit, hit

    def quiescent(self, fast, states):
        return all(s[3] == self.R for s in states) and len({fast.output(s) for s in states}) == 1


class ComposedProtocol(AsyncProtocol):
    """Product of a fast protocol, a backup protocol and the node's input.

    State ``(mode, inner, z)``.  A fast-mode node that meets a backup-mode
    node, or whose trigger fires, switches to backup with the input
    ``seed_input(fast_state, z)``.
    """

    def __init__(self, fast: AsyncProtocol, backup: AsyncProtocol, trigger: Trigger,
                 seed_input: Callable[[object, object], object], name: str | None = None):
        self.fast, self.backup, self.trigger = fast, backup, trigger
        self.seed_input = seed_input
        self.name = name or f"{fast.name}+{backup.name}"

    def input_state(self, z):
        return (FAST, self.fast.input_state(z), z)

    def output(self, state):
        mode, inner, _ = state
        return self.fast.output(inner) if mode == FAST else self.backup.output(inner)

    def convert(self, state):
        mode, inner, z = state
        if mode == BACKUP:
            return state
        return (BACKUP, self.backup.input_state(self.seed_input(inner, z)), z)

    def transition(self, su, qu, sv, qv):
        if su[0] == BACKUP or sv[0] == BACKUP:
            su, sv = self.convert(su), self.convert(sv)
            iu, iv = self.backup.transition(su[1], qu, sv[1], qv)
            return (BACKUP, iu, su[2]), (BACKUP, iv, sv[2])
        iu, iv = self.fast.transition(su[1], qu, sv[1], qv)
        nu, nv = (FAST, iu, su[2]), (FAST, iv, sv[2])
        fu, fv = self.trigger.fires(su[1], iu, sv[1], iv, self.fast.output(iu), self.fast.output(iv))
        if fu:
            nu = self.convert(nu)
        if fv:
            nv = self.convert(nv)
        return nu, nv

    def is_stable(self, config):
        if all(s[0] == BACKUP for s in config):
            return bool(self.backup.is_stable([s[1] for s in config]))
        if all(s[0] == FAST for s in config):
            return self.trigger.quiescent(self.fast, [s[1] for s in config])
        return False

    def observables(self, config):
        return {"backup_nodes": sum(1 for s in config if s[0] == BACKUP)}

    def describe(self):
        return {"fast": self.fast.describe(), "backup": self.backup.name, "trigger": self.trigger.name}


def force_backup(protocol: ComposedProtocol, config: Sequence, nodes: Sequence[int]) -> list:
    """Copy of ``config`` with ``nodes`` switched to backup mode (a forced trigger)."""
    out = list(config)
    for v in nodes:
        out[v] = protocol.convert(out[v])
    return out
