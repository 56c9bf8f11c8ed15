"""Electrical network model and the ``.net`` grid file format.

Grid file grammar (version 1)::

    # comment lines start with '#', blank lines are ignored
    version 1
    base_mva 100.0

    [buses]
    <id> <zone>          # one bus per line, integer ids, zones label 1..Z

    [lines]
    <from> <to> <reactance_pu> <capacity_mw>

``version`` and ``base_mva`` are key/value lines outside any section.
Reactances are per-unit series reactances on the system base; capacities are
MW thermal limits. Parallel lines between the same bus pair are allowed. The
graph must be connected and zone labels must cover 1..max(zone) without gaps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Bus:
    id: int
    zone: int


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float


class Network:
    """Validated bus/line model used by distances, power flow and the CLI.

    Immutable after construction; safe to share between threads.
    """

    def __init__(self, buses, lines, base_power=100.0):
        self.buses = tuple(buses)
        self.lines = tuple(lines)
        self.base_power = float(base_power)
        self._validate()
        self._pos = {bus.id: i for i, bus in enumerate(self.buses)}
        self.zone_count = max(bus.zone for bus in self.buses)

    def _validate(self):
        if not self.buses:
            raise ValidationError("network has no buses")
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate bus ids in network")
        if self.base_power <= 0:
            raise ValidationError("base_mva must be positive")
        id_set = set(ids)
        for line in self.lines:
            if line.reactance <= 0:
                raise ValidationError(
                    f"line {line.from_bus}-{line.to_bus}: reactance must be positive, "
                    f"got {line.reactance}")
            if line.capacity <= 0:
                raise ValidationError(
                    f"line {line.from_bus}-{line.to_bus}: capacity must be positive")
            if line.from_bus == line.to_bus:
                raise ValidationError(f"line {line.id} connects bus {line.from_bus} to itself")
            if line.from_bus not in id_set or line.to_bus not in id_set:
                raise ValidationError(
                    f"line {line.from_bus}-{line.to_bus} references an unknown bus")
        zones = sorted({bus.zone for bus in self.buses})
        if zones != list(range(1, zones[-1] + 1)):
            raise ValidationError(f"zone labels must cover 1..{zones[-1]}, got {zones}")
        self._check_connected(id_set)

    def _check_connected(self, id_set):
        if len(self.buses) == 1:
            return
        adjacency = {i: set() for i in id_set}
        for line in self.lines:
            adjacency[line.from_bus].add(line.to_bus)
            adjacency[line.to_bus].add(line.from_bus)
        seen = set()
        stack = [self.buses[0].id]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(adjacency[u] - seen)
        missing = sorted(id_set - seen)
        if missing:
            raise ValidationError(f"network is disconnected: unreachable buses {missing}")

    @property
    def n_buses(self):
        return len(self.buses)

    def bus_index(self, bus_id):
        """Position of a bus id in the canonical ordering (file order)."""
        try:
            return self._pos[bus_id]
        except KeyError:
            raise ValidationError(f"unknown bus {bus_id}") from None

    def zone_of(self, bus_id):
        return self.buses[self.bus_index(bus_id)].zone

    def adjacency(self):
        """bus id -> set of neighbouring bus ids."""
        out = {bus.id: set() for bus in self.buses}
        for line in self.lines:
            out[line.from_bus].add(line.to_bus)
            out[line.to_bus].add(line.from_bus)
        return out


def susceptance_matrix(network):
    """DC susceptance (weighted Laplacian) matrix, ordered like network.buses.

    B[i, j] = -1/x summed over parallel lines between i and j, B[i, i] closes
    the row to zero sum. Symmetric and singular by construction.
    """
    n = network.n_buses
    B = np.zeros((n, n))
    for line in network.lines:
        i = network.bus_index(line.from_bus)
        j = network.bus_index(line.to_bus)
        y = 1.0 / line.reactance
        B[i, j] -= y
        B[j, i] -= y
        B[i, i] += y
        B[j, j] += y
    return B


def net_injections(community, net_powers, network):
    """Per-bus MW injections implied by agent net powers.

    net_powers is indexed like community.agents; the result is indexed like
    network.buses, zero at buses without agents.
    """
    injections = np.zeros(network.n_buses)
    for agent, power in zip(community.agents, net_powers):
        injections[network.bus_index(agent.bus)] += power
    return injections


def _tokenize(path):
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield lineno, text


def load_network(path):
    """Parse and validate a ``.net`` grid file."""
    base_mva = 100.0
    version = None
    buses = []
    lines = []
    section = None
    for lineno, text in _tokenize(path):
        if text.startswith("["):
            if text not in ("[buses]", "[lines]"):
                raise ValidationError(f"{path}:{lineno}: unknown section {text}")
            section = text
            continue
        fields = text.split()
        if section is None:
            if len(fields) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'key value', got {text!r}")
            key, value = fields
            if key == "version":
                version = value
            elif key == "base_mva":
                base_mva = _parse_float(value, path, lineno, "base_mva")
            else:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        elif section == "[buses]":
            if len(fields) != 2:
                raise ValidationError(f"{path}:{lineno}: bus rows need 'id zone'")
            buses.append(Bus(id=_parse_int(fields[0], path, lineno, "bus id"),
                             zone=_parse_int(fields[1], path, lineno, "zone")))
        else:
            if len(fields) != 4:
                raise ValidationError(
                    f"{path}:{lineno}: line rows need 'from to reactance_pu capacity_mw'")
            lines.append(Line(
                id=len(lines) + 1,
                from_bus=_parse_int(fields[0], path, lineno, "from bus"),
                to_bus=_parse_int(fields[1], path, lineno, "to bus"),
                reactance=_parse_float(fields[2], path, lineno, "reactance"),
                capacity=_parse_float(fields[3], path, lineno, "capacity")))
    if version is None:
        raise ValidationError(f"{path}: missing 'version' line")
    if version != str(FORMAT_VERSION):
        raise ValidationError(f"{path}: unsupported network format version {version}")
    return Network(buses, lines, base_power=base_mva)


def save_network(network, path):
    """Serialize a network in the ``.net`` grammar (round-trips with load_network)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# peermarket network v1\n")
        handle.write(f"version {FORMAT_VERSION}\n")
        handle.write(f"base_mva {network.base_power!r}\n\n")
        handle.write("[buses]\n")
        for bus in network.buses:
            handle.write(f"{bus.id} {bus.zone}\n")
        handle.write("\n[lines]\n")
        for line in network.lines:
            handle.write(f"{line.from_bus} {line.to_bus} {line.reactance!r} {line.capacity!r}\n")


def _parse_int(token, path, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise ValidationError(f"{path}:{lineno}: {what} must be an integer, got {token!r}") from None


def _parse_float(token, path, lineno, what):
    try:
        value = float(token)
    except ValueError:
        raise ValidationError(f"{path}:{lineno}: {what} must be a number, got {token!r}") from None
    if not np.isfinite(value):
        raise ValidationError(f"{path}:{lineno}: {what} must be finite")
    return value
