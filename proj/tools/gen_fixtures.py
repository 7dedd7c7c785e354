#!/usr/bin/env python3
"""Reference tables for the Bessel and cone-mode tests (mpmath, 30 digits)."""
import os
import mpmath as mp

mp.mp.dps = 30
out = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")

orders = [mp.mpf(k) / 2 for k in range(0, 11)]
xs = ["0.001", "0.01", "0.1", "0.5", "1", "1.9", "2.1", "3.7", "5", "8", "12",
      "20", "24.9", "25.1", "30", "50", "100", "250"]

with open(os.path.join(out, "bessel_reference.csv"), "w") as f:
    f.write("kind,nu,x,value\n")
    for nu in orders:
        for xv in xs:
            x = mp.mpf(xv)
            f.write("J,%s,%s,%s\n" % (mp.nstr(nu, 3), xv, mp.nstr(mp.besselj(nu, x), 20)))
            f.write("Is,%s,%s,%s\n" % (mp.nstr(nu, 3), xv, mp.nstr(mp.besseli(nu, x) * mp.exp(-x), 20)))
            f.write("Ks,%s,%s,%s\n" % (mp.nstr(nu, 3), xv, mp.nstr(mp.besselk(nu, x) * mp.exp(x), 20)))


# radial mode integral with weight lambda^{m/2-1}, m = 4:
#   int_0^inf lambda J_0(R lambda) I_nu(r lambda) K_nu(r' lambda) d lambda
def mode_b(k, r, rp, R):
    nu = mp.mpf(k) / 2
    g = lambda t: t * mp.besselj(0, R * t) * mp.besseli(nu, r * t) * mp.besselk(nu, rp * t)
    return mp.quad(g, mp.linspace(0, 200, 41) + [mp.inf])


with open(os.path.join(out, "cone_mode_reference.csv"), "w") as f:
    f.write("k,r,rp,R,value\n")
    for k in (0, 1, 3, 8):
        for (r, rp, R) in (("0.1", "1", "0.5"), ("0.3", "1.2", "1.5"), ("0.05", "0.8", "2")):
            v = mode_b(k, mp.mpf(r), mp.mpf(rp), mp.mpf(R))
            f.write("%d,%s,%s,%s,%s\n" % (k, r, rp, R, mp.nstr(v, 20)))
