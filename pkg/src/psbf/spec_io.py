"""Process-spec files.

A process spec is a JSON document::

    {
      "format": "psbf-process/1",
      "name": "arm3",
      "state_vars": [{"name": "theta1", "domain_size": 4}, ...],
      "obs_vars": [{"name": "enc1", "domain_size": 4}, ...],
      "actions": [
        {
          "name": "turn1",
          "edges": [["theta1@t", "theta1@t1"], ...],
          "cpts": [
            {"child": "theta1@t1", "parents": ["theta1@t"], "rows": [[...], ...]},
            ...
          ]
        }
      ],
      "clusterings": {"default": [["theta1"], ["theta2", "theta3"]]}
    }

Node references are ``<state>@t``, ``<state>@t1`` and ``<obs>``.  CPT rows are
ordered by the mixed-radix encoding of the parent values in the listed parent
order (first parent most significant).  ``clusterings`` is optional.  Unknown
fields are rejected.

:func:`dumps` writes a canonical layout (one CPT row per line, floats in
shortest round-trip form) so that ``dumps(loads(text)) == text`` for any text
produced by :func:`dumps`.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .dbn import CPT, X, XT, Y, ActionDBN, Node, Process, VariableSpec, x1, y

FORMAT = "psbf-process/1"

_VAR = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "domain_size"],
    "properties": {
        "name": {"type": "string", "pattern": "^[^@]+$"},
        "domain_size": {"type": "integer", "minimum": 1},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format", "name", "state_vars", "obs_vars", "actions"],
    "properties": {
        "format": {"const": FORMAT},
        "name": {"type": "string"},
        "state_vars": {"type": "array", "items": _VAR},
        "obs_vars": {"type": "array", "items": _VAR},
        "actions": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "edges", "cpts"],
                "properties": {
                    "name": {"type": "string"},
                    "edges": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "string"},
                                  "minItems": 2, "maxItems": 2},
                    },
                    "cpts": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["child", "parents", "rows"],
                            "properties": {
                                "child": {"type": "string"},
                                "parents": {"type": "array", "items": {"type": "string"}},
                                "rows": {"type": "array",
                                         "items": {"type": "array", "items": {"type": "number"}}},
                            },
                        },
                    },
                },
            },
        },
        "clusterings": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}


class SpecError(ValueError):
    """The document is not a well-formed process spec."""


class _Names:
    def __init__(self, state_vars, obs_vars):
        self.state = {v.name: i for i, v in enumerate(state_vars)}
        self.obs = {v.name: j for j, v in enumerate(obs_vars)}
        self.state_names = [v.name for v in state_vars]
        self.obs_names = [v.name for v in obs_vars]

    def node(self, ref: str) -> Node:
        if ref.endswith("@t1"):
            kind, name = X, ref[:-3]
        elif ref.endswith("@t"):
            kind, name = XT, ref[:-2]
        else:
            if ref not in self.obs:
                raise SpecError(f"unknown node reference {ref!r}")
            return Node(Y, self.obs[ref])
        if name not in self.state:
            raise SpecError(f"unknown node reference {ref!r}")
        return Node(kind, self.state[name])

    def ref(self, node: Node) -> str:
        if node.kind == Y:
            return self.obs_names[node.index]
        return self.state_names[node.index] + ("@t" if node.kind == XT else "@t1")


def from_dict(doc: dict) -> Process:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SpecError(f"invalid process spec: {exc.message}") from exc
    state_vars = tuple(VariableSpec(v["name"], v["domain_size"]) for v in doc["state_vars"])
    obs_vars = tuple(VariableSpec(v["name"], v["domain_size"]) for v in doc["obs_vars"])
    names = _Names(state_vars, obs_vars)
    if len(names.state) != len(state_vars) or len(names.obs) != len(obs_vars):
        raise SpecError("duplicate variable names")
    if set(names.state) & set(names.obs):
        raise SpecError("state and observation variables share a name")

    actions = []
    for a in doc["actions"]:
        edges = frozenset((names.node(p), names.node(c)) for p, c in a["edges"])
        cpts = {}
        for c in a["cpts"]:
            child = names.node(c["child"])
            if child in cpts:
                raise SpecError(f"action {a['name']!r}: two CPTs for {c['child']!r}")
            rows = c["rows"]
            widths = {len(r) for r in rows}
            if len(widths) > 1:
                raise SpecError(f"action {a['name']!r}: ragged rows in CPT of {c['child']!r}")
            cpts[child] = CPT(child, tuple(names.node(p) for p in c["parents"]),
                              np.array(rows, dtype=float).reshape(len(rows), -1))
        actions.append(ActionDBN(a["name"], state_vars, obs_vars, edges, cpts))

    clusterings = {}
    for key, clusters in doc.get("clusterings", {}).items():
        try:
            clusterings[key] = [[names.state[v] for v in c] for c in clusters]
        except KeyError as exc:
            raise SpecError(f"clustering {key!r} names unknown variable {exc.args[0]!r}") from None
    return Process(doc["name"], state_vars, obs_vars, tuple(actions), clusterings)


def loads(text: str) -> Process:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"not valid JSON: {exc}") from exc
    return from_dict(doc)


def load(path) -> Process:
    return loads(Path(path).read_text())


def _canonical_cpt_order(dbn: ActionDBN) -> list[Node]:
    keys = [x1(i) for i in range(dbn.n)] + [y(j) for j in range(dbn.m)]
    return [k for k in keys if k in dbn.cpts] + sorted(set(dbn.cpts) - set(keys))


def dumps(process: Process) -> str:
    names = _Names(process.state_vars, process.obs_vars)
    q = json.dumps
    out = ["{", f'  "format": {q(FORMAT)},', f'  "name": {q(process.name)},']

    def var_list(key, specs):
        out.append(f'  "{key}": [')
        items = [f'    {{"name": {q(v.name)}, "domain_size": {int(v.domain_size)}}}' for v in specs]
        out.append(",\n".join(items))
        out.append("  ],")

    var_list("state_vars", process.state_vars)
    var_list("obs_vars", process.obs_vars)
    out.append('  "actions": [')
    action_blocks = []
    for a in process.actions:
        order = _canonical_cpt_order(a)
        edge_list = []
        for child in order:
            edge_list += [(p, child) for p in a.cpts[child].parents]
        edge_list += sorted(set(a.edges) - set(edge_list), key=repr)
        lines = ["    {", f'      "name": {q(a.action_name)},', '      "edges": [']
        lines.append(",\n".join(f"        [{q(names.ref(p))}, {q(names.ref(c))}]"
                                for p, c in edge_list))
        lines.append("      ],")
        lines.append('      "cpts": [')
        cpt_blocks = []
        for child in order:
            c = a.cpts[child]
            rows = ",\n".join("            " + q([float(v) for v in r]) for r in c.table)
            cpt_blocks.append("\n".join([
                "        {",
                f'          "child": {q(names.ref(child))},',
                f'          "parents": {q([names.ref(p) for p in c.parents])},',
                '          "rows": [',
                rows,
                "          ]",
                "        }",
            ]))
        lines.append(",\n".join(cpt_blocks))
        lines.append("      ]")
        lines.append("    }")
        action_blocks.append("\n".join(lines))
    out.append(",\n".join(action_blocks))
    if process.clusterings:
        out.append("  ],")
        out.append('  "clusterings": {')
        items = []
        for key, clusters in process.clusterings.items():
            ref = [[names.state_names[i] for i in c] for c in clusters]
            items.append(f"    {q(key)}: {q(ref)}")
        out.append(",\n".join(items))
        out.append("  }")
    else:
        out.append("  ]")
    out.append("}")
    text = "\n".join(out)
    return "\n".join(line for line in text.split("\n") if line.strip()) + "\n"


def dump(process: Process, path) -> None:
    Path(path).write_text(dumps(process))
