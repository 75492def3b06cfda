"""
Lane Graph
"""

from typing import Dict, Iterable, List, Optional, Set

import numpy as np
from networkx import DiGraph, Graph, connected_components  # type: ignore

from .geometry import arc_lengths, point_to_polyline_distance
from .scenario import LaneSegment


class LaneGraph:
    """ Topology of a lane map

    Two graphs are kept over lane ids: <successors> with an edge for every
    successor link, and the undirected <adjacency> graph linking lanes that
    run side by side in the same direction. Edges of the successor graph
    carry the length of the source lane.

    Attributes:
        lanes (Dict[str, LaneSegment]): lanes by id
    """

    def __init__(self, lanes: Iterable[LaneSegment]) -> None:
        self.lanes: Dict[str, LaneSegment] = {_l.id: _l for _l in lanes}
        self.successors = self.successor_graph()
        self.adjacency = self.adjacency_graph()

    def successor_graph(self) -> DiGraph:
        graph = DiGraph()
        for _id, _l in sorted(self.lanes.items()):
            graph.add_node(_id)
            length = float(arc_lengths(_l.centerline)[-1])
            for _s in _l.successors:
                graph.add_edge(_id, _s, length=length)
        return graph

    def adjacency_graph(self) -> Graph:
        graph = Graph()
        for _id, _l in sorted(self.lanes.items()):
            graph.add_node(_id)
            for _n in (_l.left, _l.right):
                if _n is not None:
                    graph.add_edge(_id, _n)
        return graph

    def is_adjacency_symmetric(self) -> bool:
        """ left of A is B <=> right of B is A, for every lane """

        for _id, _l in self.lanes.items():
            if _l.left is not None and self.lanes[_l.left].right != _id:
                return False
            if _l.right is not None and self.lanes[_l.right].left != _id:
                return False
        return True

    def lanes_abreast(self, lane_id: str) -> Set[str]:
        """ The lane and every lane reachable through left/right links """

        for _c in connected_components(self.adjacency):
            if lane_id in _c:
                return set(_c)
        return {lane_id}

    def lanes_at(self, point: np.ndarray, tolerance: float = 1.75) -> List[str]:
        """ Lanes whose centerline passes within <tolerance> of a point, by id """

        return sorted(
            _id for _id, _l in self.lanes.items()
            if point_to_polyline_distance(point, _l.centerline) <= tolerance)

    def nearest_lane(self, point: np.ndarray,
                     candidates: Optional[Iterable[str]] = None) -> str:
        ids = sorted(candidates) if candidates is not None else sorted(
            self.lanes)
        dist = [
            point_to_polyline_distance(point, self.lanes[_id].centerline)
            for _id in ids
        ]
        return ids[int(np.argmin(dist))]

    def lane_length(self, lane_id: str) -> float:
        return float(arc_lengths(self.lanes[lane_id].centerline)[-1])

    def follow(self, lane_id: str, distance: float) -> List[str]:
        """ Lanes covering <distance> meters from the start of <lane_id>,
        taking the first successor (by id) at every fork """

        out = [lane_id]
        covered = self.lane_length(lane_id)
        while covered < distance:
            nxt = sorted(self.successors.successors(out[-1]))
            if not nxt or nxt[0] in out:
                break
            out.append(nxt[0])
            covered += self.lane_length(nxt[0])
        return out
