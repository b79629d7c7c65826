"""The coupling mechanism of the norm-product regularizer.

Penalizing the product of per-layer spectral norms couples the layers:
each layer's gradient is weighted by the other layers' norms, so one
layer may grow while another shrinks at a constant product. Penalizing
the per-layer sum has no such coupling; capping every layer at 1 is
strictly more conservative than capping the product at 1.
"""

import os

import numpy as np

from lipreg import (
    Layer,
    Network,
    RegularizationMode,
    classify_point,
    contour_grid,
    penalty_gradient,
    spectral_norms,
    write_contour_csv,
)

print("=== two scalar weights: gradients of |W1|*|W2| vs |W1|+|W2| ===")
net = Network([Layer(np.array([[2.0]]), np.zeros(1), "relu"),
               Layer(np.array([[0.5]]), np.zeros(1), "linear")], 1)
ests = spectral_norms(net)
g_prod = penalty_gradient(RegularizationMode.lipschitz_product(1.0), net, ests)
g_sum = penalty_gradient(RegularizationMode.layer_sum(1.0), net, ests)
print(f"W1=2.0, W2=0.5  product penalty grad: dW1={g_prod.dW[0][0,0]:.3f} "
      f"dW2={g_prod.dW[1][0,0]:.3f}   (each layer feels the other)")
print(f"                sum penalty grad:     dW1={g_sum.dW[0][0,0]:.3f} "
      f"dW2={g_sum.dW[1][0,0]:.3f}   (no coupling)")

print()
print("=== scaling one layer rescales the other layers' product gradients ===")
rng = np.random.default_rng(4)
net = Network([Layer(rng.standard_normal((6, 4)), np.zeros(6), "relu"),
               Layer(rng.standard_normal((3, 6)), np.zeros(3), "relu"),
               Layer(rng.standard_normal((1, 3)), np.zeros(1), "linear")], 4)
mode = RegularizationMode.lipschitz_product(1.0)
before = penalty_gradient(mode, net, spectral_norms(net))
net.layers[0].W *= 2.0
after = penalty_gradient(mode, net, spectral_norms(net))
for l in (1, 2):
    ratio = np.linalg.norm(after.dW[l]) / np.linalg.norm(before.dW[l])
    print(f"after doubling layer 1, layer {l + 1} gradient norm scaled by "
          f"{ratio:.9f}")

print()
print("=== feasible regions: |W1|,|W2| <= 1 is a subset of |W1 W2| <= 1 ===")
grid = contour_grid((-3.0, 3.0), (-3.0, 3.0), 301)
both = int(np.sum(grid.in_square & grid.in_product))
only_product = int(np.sum(grid.in_product & ~grid.in_square))
violations = int(np.sum(grid.in_square & ~grid.in_product))
print(f"nodes in both regions: {both}; product-only nodes: {only_product}; "
      f"square-only nodes (must be 0): {violations}")
lhat, in_square, in_product = classify_point(2.0, 0.25)
print(f"witness (2, 0.25): product bound {lhat} -> inside the product region "
      f"but far outside the unit square")

out_dir = os.path.join(os.path.dirname(__file__), "..", "demo_output")
os.makedirs(out_dir, exist_ok=True)
path = os.path.abspath(os.path.join(out_dir, "contour.csv"))
write_contour_csv(path, grid)
print(f"full contour grid written to {path} (plot with any CSV tool)")
