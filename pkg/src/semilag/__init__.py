"""Semi-Lagrangian solvers for HJB equations with truncated high-order reconstructions."""
