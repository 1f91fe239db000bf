"""Full-duplex SI channel estimation simulator."""
