# Domain models module
