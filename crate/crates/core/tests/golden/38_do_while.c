void f() { do { --n; } while ( n ); }
