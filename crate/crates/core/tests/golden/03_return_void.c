void f() { return; }
