// JSON messages spoken with the teleop server. The client holds no
// environment logic: everything it renders comes from the scene block.
export {};
