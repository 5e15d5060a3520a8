"""Mixed-formulation PINNs for stationary thermoelasticity in heterogeneous solids."""
