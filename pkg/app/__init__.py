"""RIS-assisted two-user downlink simulator with opportunistic rate splitting."""
