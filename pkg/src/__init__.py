"""gridflex: power flow linearization, flexibility aggregation and storage scheduling."""
