void f() { if ( a ) b = 1; }
