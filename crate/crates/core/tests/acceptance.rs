// Acceptance gate — populated once all modules are in place.
