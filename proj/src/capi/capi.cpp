namespace reachbench {
}
