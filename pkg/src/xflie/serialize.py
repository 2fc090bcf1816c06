"""``.lsg.json`` documents: versioned, nested, stable key order."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .errors import InvalidPolygon, MalformedDocument, SchemaVersionMismatch
from .lsg import (
    ConvexPolygon2D,
    FeatureGraph,
    FeatureNode,
    LayeredSemanticGraph,
    LevelGraph,
    LevelNode,
    PoseGraph,
    PoseNode,
    RootNode,
    Status,
    TargetGraph,
    TargetNode,
    edge_key,
)

SCHEMA_VERSION = 1


def _edges(edges: dict[tuple[int, int], float]) -> list[list]:
    return [[a, b, w] for (a, b), w in sorted(edges.items())]


def serialize(g: LayeredSemanticGraph) -> dict[str, Any]:
    tg = g.target_graph
    targets = []
    for t in tg.nodes.values():
        doc: dict[str, Any] = {
            "id": t.id,
            "label": t.label,
            "status": t.status.value,
            "sem_class": t.sem_class,
            "position_est": list(t.position_est),
            "confidence": t.confidence,
            "seg_area": t.seg_area,
            "utility": t.utility,
            "image_ref": t.image_ref,
            "polygon": None if t.polygon is None else [list(v) for v in t.polygon.vertices],
            "levels": None,
            "level_edges": None,
        }
        if t.level_graph is not None:
            doc["levels"] = [_level(lv) for lv in t.level_graph.nodes]
            doc["level_edges"] = _edges(t.level_graph.edges)
        targets.append(doc)
    return {
        "schema_version": SCHEMA_VERSION,
        "next_node_id": g.next_node_id,
        "class_counters": dict(sorted(g.class_counters.items())),
        "root_pose": {
            "id": tg.root.id,
            "position": list(tg.root.position),
            "orientation": list(tg.root.orientation),
        },
        "targets": targets,
        "target_edges": _edges(tg.edges),
    }


def _level(lv: LevelNode) -> dict[str, Any]:
    return {
        "id": lv.id,
        "label": lv.label,
        "index": lv.index,
        "position": list(lv.position),
        "poses": [
            {
                "id": p.id,
                "position": list(p.position),
                "orientation": list(p.orientation),
                "image_ref": p.image_ref,
                "features": [
                    {
                        "id": f.id,
                        "label": f.label,
                        "sem_class": f.sem_class,
                        "position_est": list(f.position_est),
                        "confidence": f.confidence,
                        "seg_area": f.seg_area,
                    }
                    for f in p.feature_graph.nodes
                ],
            }
            for p in lv.pose_graph.nodes
        ],
        "pose_edges": _edges(lv.pose_graph.edges),
    }


def _v3(x) -> tuple[float, float, float]:
    if not isinstance(x, list) or len(x) != 3:
        raise MalformedDocument(f"expected a 3-vector, got {x!r}")
    return (float(x[0]), float(x[1]), float(x[2]))


def _edge_dict(rows) -> dict[tuple[int, int], float]:
    out = {}
    for row in rows:
        a, b, w = row
        out[edge_key(int(a), int(b))] = float(w)
    return out


def deserialize(doc: dict[str, Any]) -> LayeredSemanticGraph:
    if not isinstance(doc, dict):
        raise MalformedDocument("document root must be an object")
    if "schema_version" not in doc:
        raise MalformedDocument("missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"document schema {doc['schema_version']}, reader supports {SCHEMA_VERSION}")
    try:
        rp = doc["root_pose"]
        root = RootNode(position=_v3(rp["position"]), orientation=tuple(float(c) for c in rp["orientation"]), id=int(rp["id"]))
        tg = TargetGraph(root)
        for td in doc["targets"]:
            t = TargetNode(
                id=int(td["id"]),
                label=str(td["label"]),
                status=Status(td["status"]),
                position_est=_v3(td["position_est"]),
                image_ref=str(td["image_ref"]),
                sem_class=str(td["sem_class"]),
                confidence=float(td["confidence"]),
                seg_area=float(td["seg_area"]),
                utility=float(td["utility"]),
            )
            if td["polygon"] is not None:
                t.polygon = ConvexPolygon2D(tuple((float(x), float(y)) for x, y in td["polygon"]))
            if td["levels"] is not None:
                lg = LevelGraph(parent_target_id=t.id)
                for ld in td["levels"]:
                    lv = LevelNode(
                        id=int(ld["id"]),
                        label=str(ld["label"]),
                        index=int(ld["index"]),
                        position=_v3(ld["position"]),
                        pose_graph=PoseGraph(int(ld["id"])),
                    )
                    for pd in ld["poses"]:
                        pid = int(pd["id"])
                        fg = FeatureGraph(pid)
                        for fd in pd["features"]:
                            fg.nodes.append(
                                FeatureNode(
                                    id=int(fd["id"]),
                                    label=str(fd["label"]),
                                    sem_class=str(fd["sem_class"]),
                                    position_est=_v3(fd["position_est"]),
                                    confidence=float(fd["confidence"]),
                                    seg_area=float(fd["seg_area"]),
                                )
                            )
                        lv.pose_graph.nodes.append(
                            PoseNode(pid, _v3(pd["position"]), tuple(float(c) for c in pd["orientation"]), str(pd["image_ref"]), fg)
                        )
                    lv.pose_graph.edges = _edge_dict(ld["pose_edges"])
                    lg.nodes.append(lv)
                lg.edges = _edge_dict(td["level_edges"])
                t.level_graph = lg
            tg.nodes[t.id] = t
        tg.edges = _edge_dict(doc["target_edges"])
        return LayeredSemanticGraph(
            target_graph=tg,
            next_node_id=int(doc["next_node_id"]),
            class_counters={str(k): int(v) for k, v in doc["class_counters"].items()},
        )
    except MalformedDocument:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, InvalidPolygon) as exc:
        raise MalformedDocument(f"malformed graph document: {exc!r}") from exc


def dumps(g: LayeredSemanticGraph) -> str:
    return json.dumps(serialize(g), indent=1, allow_nan=False) + "\n"


def loads(text: str) -> LayeredSemanticGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    return deserialize(doc)


def save(g: LayeredSemanticGraph, path: str | Path) -> None:
    Path(path).write_text(dumps(g))


def load(path: str | Path) -> LayeredSemanticGraph:
    return loads(Path(path).read_text())
