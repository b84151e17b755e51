"""Converts PLM-style XML process exports into the canonical BoP/BoM JSON.

Input dialect (documented in schemas/process-xml.md, samples under
tests/corpus/):

    <process name="...">
      <parts>  <part id=".." name=".."/> ... </parts>
      <tools>  <tool id=".." name=".."/> ... </tools>
      <tasks>
        <task id=".." name=".." agent="robot|operator">
          <description>...</description>
          <predecessor ref=".."/>
          <uses part=".."/> <uses tool=".."/>
          <pose anchor=".." x=".." y=".." z=".."
                qw=".." qx=".." qy=".." qz=".."/>
        </task>
      </tasks>
    </process>
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field


class ParseError(ValueError):
    """Malformed XML; message carries line/column."""


class FieldError(ValueError):
    """Missing or malformed mandatory field; message carries the field path."""


@dataclass
class CanonicalBoM:
    parts: list = field(default_factory=list)
    tools: list = field(default_factory=list)

    def to_json(self):
        return {"parts": list(self.parts), "tools": list(self.tools)}

    @staticmethod
    def from_json(doc):
        return CanonicalBoM(parts=list(doc.get("parts", [])), tools=list(doc.get("tools", [])))


@dataclass
class CanonicalBoP:
    name: str = ""
    tasks: list = field(default_factory=list)

    def to_json(self):
        return {"name": self.name, "tasks": list(self.tasks)}

    @staticmethod
    def from_json(doc):
        return CanonicalBoP(name=doc.get("name", ""), tasks=list(doc.get("tasks", [])))


def _require_attr(element, name, path):
    value = element.get(name)
    if value is None or value == "":
        raise FieldError(f"{path}: missing mandatory attribute {name!r}")
    return value


def convert(xml_text: str):
    """Deterministic XML -> (CanonicalBoP, CanonicalBoM) mapping."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ParseError(f"line {line}, column {column}: {exc.msg}") from exc
    if root.tag != "process":
        raise FieldError(f"/: expected root element <process>, got <{root.tag}>")

    bom = CanonicalBoM()
    for i, part in enumerate(root.iterfind("./parts/part")):
        path = f"/process/parts/part[{i}]"
        bom.parts.append(
            {"id": _require_attr(part, "id", path), "name": part.get("name", "")}
        )
    for i, tool in enumerate(root.iterfind("./tools/tool")):
        path = f"/process/tools/tool[{i}]"
        bom.tools.append(
            {"id": _require_attr(tool, "id", path), "name": tool.get("name", "")}
        )

    bop = CanonicalBoP(name=root.get("name", ""))
    for order, task in enumerate(root.iterfind("./tasks/task")):
        path = f"/process/tasks/task[{order}]"
        task_id = _require_attr(task, "id", path)
        doc = {
            "id": task_id,
            "name": _require_attr(task, "name", path),
            "description": (task.findtext("description") or "").strip(),
            "agent_hint": task.get("agent", ""),
            "predecessors": [],
            "part_ids": [],
            "tool_ids": [],
            "order": order,
        }
        for pred in task.iterfind("predecessor"):
            doc["predecessors"].append(_require_attr(pred, "ref", f"{path}/predecessor"))
        for uses in task.iterfind("uses"):
            if uses.get("part"):
                doc["part_ids"].append(uses.get("part"))
            elif uses.get("tool"):
                doc["tool_ids"].append(uses.get("tool"))
            else:
                raise FieldError(f"{path}/uses: needs a part or tool attribute")
        pose = task.find("pose")
        if pose is not None:
            try:
                doc["step_pose"] = {
                    "position": [float(pose.get(k, "0")) for k in ("x", "y", "z")],
                    "orientation": [
                        float(pose.get("qw", "1")),
                        float(pose.get("qx", "0")),
                        float(pose.get("qy", "0")),
                        float(pose.get("qz", "0")),
                    ],
                }
            except ValueError as exc:
                raise FieldError(f"{path}/pose: {exc}") from exc
            doc["step_anchor"] = pose.get("anchor", "")
        bop.tasks.append(doc)
    return bop, bom


def validate(bop: CanonicalBoP, bom: CanonicalBoM) -> list:
    """Pure structural checks; returns a list of violation strings."""
    violations = []
    part_ids = set()
    for part in bom.parts:
        if part["id"] in part_ids:
            violations.append(f"duplicate part id {part['id']!r}")
        part_ids.add(part["id"])
    tool_ids = set()
    for tool in bom.tools:
        if tool["id"] in tool_ids:
            violations.append(f"duplicate tool id {tool['id']!r}")
        tool_ids.add(tool["id"])

    task_ids = set()
    for task in bop.tasks:
        if task["id"] in task_ids:
            violations.append(f"duplicate task id {task['id']!r}")
        task_ids.add(task["id"])
    for task in bop.tasks:
        for ref in task.get("predecessors", []):
            if ref not in task_ids:
                violations.append(f"task {task['id']!r}: unknown predecessor {ref!r}")
        for ref in task.get("part_ids", []):
            if ref not in part_ids:
                violations.append(f"task {task['id']!r}: unknown part {ref!r}")
        for ref in task.get("tool_ids", []):
            if ref not in tool_ids:
                violations.append(f"task {task['id']!r}: unknown tool {ref!r}")

    cycle = _find_cycle({t["id"]: t.get("predecessors", []) for t in bop.tasks})
    if cycle is not None:
        violations.append(f"precedence cycle: {' -> '.join(cycle)}")
    return violations


def _find_cycle(preds):
    state = {}
    trace = []

    def visit(tid):
        mark = state.get(tid)
        if mark == 1:
            return None
        if mark == 0:
            start = trace.index(tid)
            return trace[start:] + [tid]
        state[tid] = 0
        trace.append(tid)
        for ref in preds.get(tid, []):
            if ref in preds:
                cycle = visit(ref)
                if cycle is not None:
                    return cycle
        trace.pop()
        state[tid] = 1
        return None

    for tid in sorted(preds):
        cycle = visit(tid)
        if cycle is not None:
            return cycle
    return None


def to_document(bop: CanonicalBoP, bom: CanonicalBoM) -> dict:
    return {"bop": bop.to_json(), "bom": bom.to_json()}


def from_document(doc: dict):
    return CanonicalBoP.from_json(doc["bop"]), CanonicalBoM.from_json(doc["bom"])


def convert_file(in_path, out_path=None):
    with open(in_path) as fh:
        bop, bom = convert(fh.read())
    violations = validate(bop, bom)
    if violations:
        raise FieldError("; ".join(violations))
    doc = to_document(bop, bom)
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return doc
