f();
