"""Principal eigenvalue optimization for drifted diffusion on the ball."""
