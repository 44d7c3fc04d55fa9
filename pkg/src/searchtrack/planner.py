"""Partition-matroid action space, greedy search, and GCM constant fixing.

The greedy algorithm repeatedly finds, for every still-unplanned agent, its
best marginal action, then commits the agent whose best action yields the
highest value.  For monotone submodular values this is guaranteed to reach
at least half the optimum over the partition matroid; a brute-force planner
is provided to verify the bound on small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Action:
    """A constant-heading motion primitive for one agent."""

    agent: int
    heading_index: int
    heading: float        # radians
    start: tuple          # agent position when the plan is made

    def __repr__(self):
        deg = np.degrees(self.heading)
        return f"Action(agent={self.agent}, heading={deg:.0f}deg)"


class MatroidViolation(ValueError):
    pass


class ActionSet:
    """A feasible set of actions: at most one per agent."""

    __slots__ = ("actions",)

    def __init__(self, actions=()):
        self.actions = tuple(sorted(actions, key=lambda a: (a.agent, a.heading_index)))
        self.check_feasible()

    def check_feasible(self):
        agents = [a.agent for a in self.actions]
        if len(agents) != len(set(agents)):
            raise MatroidViolation("more than one action for an agent")

    def with_action(self, action):
        return ActionSet(self.actions + (action,))

    def agents(self):
        return {a.agent for a in self.actions}

    def complete_for(self, agent):
        return agent in self.agents()

    def __len__(self):
        return len(self.actions)

    def __eq__(self, other):
        return isinstance(other, ActionSet) and self.actions == other.actions

    def __hash__(self):
        return hash(self.actions)

    def __repr__(self):
        return f"ActionSet{self.actions}"


COMPASS = [i * np.pi / 4.0 for i in range(8)]  # E, NE, N, NW, W, SW, S, SE


class PartitionMatroid:
    """Per-agent candidate action lists; feasible sets take at most one from each."""

    def __init__(self, actions_by_agent):
        self.actions_by_agent = {
            agent: list(actions) for agent, actions in actions_by_agent.items()
        }
        for agent, actions in self.actions_by_agent.items():
            for a in actions:
                if a.agent != agent:
                    raise ValueError("action filed under the wrong agent")

    @classmethod
    def compass(cls, starts, headings=COMPASS, allowed=None):
        """Eight-direction matroid from per-agent start positions.

        `allowed` optionally maps agent -> predicate(heading_index) used to
        mask actions (e.g. trajectories leaving the surveillance region).
        """
        by_agent = {}
        for agent, start in enumerate(starts):
            acts = []
            for idx, heading in enumerate(headings):
                if allowed is not None and not allowed(agent, idx):
                    continue
                acts.append(Action(agent, idx, heading, tuple(np.asarray(start, float))))
            by_agent[agent] = acts
        return cls(by_agent)

    def agents(self):
        return sorted(self.actions_by_agent)

    def actions(self, agent):
        return self.actions_by_agent[agent]

    def all_actions(self):
        return [a for agent in self.agents() for a in self.actions(agent)]

    def n_complete_sets(self):
        out = 1
        for agent in self.agents():
            out *= max(1, len(self.actions(agent)))
        return out


def greedy_plan(matroid: PartitionMatroid, value_fn) -> ActionSet:
    """Greedy matroid search: commit the best (agent, action) pair each round.

    Ties break toward the lowest agent index, then action list order, making
    the plan deterministic for a deterministic value function.
    """
    agents = matroid.agents()
    if not agents:
        raise ValueError("no agents to plan for")
    for agent in agents:
        if not matroid.actions(agent):
            raise ValueError(f"agent {agent} has an empty action list")
    chosen = ActionSet()
    unplanned = list(agents)
    while unplanned:
        best = None  # (value, agent, action)
        for agent in unplanned:
            for action in matroid.actions(agent):
                value = value_fn(chosen.with_action(action))
                if best is None or value > best[0]:
                    best = (value, agent, action)
        _, agent, action = best
        chosen = chosen.with_action(action)
        unplanned.remove(agent)
    return chosen


def fix_gcm_constants(matroid: PartitionMatroid, v1_fn, v2_fn):
    """Freeze per-objective (min, max) from the empty set and every singleton."""
    sets = [ActionSet()] + [ActionSet([a]) for a in matroid.all_actions()]
    consts = []
    for fn in (v1_fn, v2_fn):
        values = [fn(s) for s in sets]
        consts.append((min(values), max(values)))
    return tuple(consts)


def brute_force_plan(matroid: PartitionMatroid, value_fn, cap=10**6):
    """Exact argmax over all complete action sets (lexicographic tie-break)."""
    if matroid.n_complete_sets() > cap:
        raise ValueError("search space too large for brute force")
    best_set, best_value = None, -np.inf
    per_agent = [matroid.actions(agent) for agent in matroid.agents()]
    for combo in itertools.product(*per_agent):
        candidate = ActionSet(combo)
        value = value_fn(candidate)
        if value > best_value:
            best_set, best_value = candidate, value
    return best_set, best_value
