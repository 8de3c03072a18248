# KdV Low-Regularity Integrator Package