# KdV Low-Regularity Integrator Services Package