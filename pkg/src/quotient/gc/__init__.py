"""Boolean circuits, half-gates garbling and the two-party circuit runner."""
