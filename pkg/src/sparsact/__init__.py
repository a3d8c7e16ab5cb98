"""Sparse actuator/sensor selection and covariance completion via convex
reformulations solved in the space of ``Y = K X``."""
