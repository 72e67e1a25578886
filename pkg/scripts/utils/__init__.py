"""Utils package for the semionline matching scripts."""
