"""
Stable-drift heat kernels.

Numerical construction and verification of the heat kernel of the
fractional Laplacian with a gradient drift, on R^d or killed on exiting an
open set. Run a configuration with:
```bash
python main.py run configs/minimal.json
```
"""
