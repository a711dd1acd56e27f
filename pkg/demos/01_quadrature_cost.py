# Why not integrate everything numerically?
#
# A midpoint grid on [0, 1]^p needs n points per axis for accuracy eps on a
# simple test integrand, so the total cost is n**p. Watch how fast it grows.

from prodreg_em.quadrature import min_points_per_axis, scaling_table

# One dimension: ten midpoints already reach an error of 0.01.

print(min_points_per_axis(1, 0.01))

# Up to five dimensions.

for row in scaling_table(5, 0.01):
    print(f"p={row.p}  n={row.per_axis:3d}  total={row.total_points:>9d}  error={row.error:.4g}")

# Five missing predictors would already cost millions of nodes per case,
# which is why the hybrid E-step only falls back to a grid when it has to.
