"""Regenerate the example inputs in this directory."""
from pathlib import Path

import numpy as np

from polyiso import BaryPoint, InverseSystem, MetricComplex, PLMap
from polyiso import io

here = Path(__file__).resolve().parent

square = MetricComplex.from_coords(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), [(0, 1, 2), (0, 2, 3)])
io.save_complex(square, here / "square.json")
io.save_map(PLMap.chart_embedding(square, 5, 0.5), here / "square_f0.json", domain_ref=here / "square.json")
io.write_json(here / "square_pairs.json", {"pairs": [[0, 2], [1, 3], [[0, [0.2, 0.3, 0.5]], [1, [0.1, 0.1, 0.8]]]]})

e = {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 1.0, (0, 3): 1.0}
circle = MetricComplex.from_simplices(4, list(e), e)
io.save_complex(circle, here / "circle.json")
f0 = PLMap(circle, 0, np.array([[0, 0, 0], [0.5, 0, 0], [0.5, 0.5, 0], [0, 0.5, 0.0]]))
io.save_map(f0, here / "circle_f0.json", domain_ref=here / "circle.json")

M = 6
stages = [MetricComplex.from_simplices(3, [(0, 1), (1, 2)], {(0, 1): 1.0, (1, 2): 2.0**-i}) for i in range(M + 1)]
bonds = []
for i in range(M):
    q = stages[i]
    pts = (q.vertex_point(0), q.vertex_point(1), BaryPoint(1, (0.5, 0.5)))
    bonds.append(PLMap(stages[i + 1], 0, codomain=q, cod_points=pts))
clamp = InverseSystem(stages, bonds, 1)
io.save_system(clamp, here / "clamp" / "system.json")
io.save_map(PLMap(stages[0], 0, np.array([[0, 0, 0], [0.5, 0, 0], [1, 0, 0.0]])), here / "clamp" / "f0.json",
            domain_ref=here / "clamp" / "p0.json")

io.save_system(InverseSystem.constant(circle, 3), here / "circle_tower" / "system.json")
io.save_map(f0, here / "circle_tower" / "f0.json", domain_ref=here / "circle_tower" / "p0.json")
