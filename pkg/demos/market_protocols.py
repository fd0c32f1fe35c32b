"""A tour of the trading protocols on toy numbers."""

from gridecon.protocols import (
    Auction,
    BargainSession,
    Bidder,
    DealTemplate,
    Tender,
    award_tender,
    collect_bids,
    negotiate_bargain,
    proportional_shares,
    run_auction,
)

bidders = [Bidder("alice", 10), Bidder("bob", 8), Bidder("carol", 5)]

print("Auctions with private values alice=10 bob=8 carol=5")
for kind, extra in (("english", {}), ("dutch", {"start_price": 15}), ("fpsb", {}), ("vickrey", {})):
    a = run_auction(Auction(kind, **extra), bidders)
    print(f"  {kind:<8} winner={a.winner:<6} price={a.price}")

print("\nBargaining: broker opens at 2 (limit 6), provider asks 10 (reserve 5)")
s = negotiate_bargain(BargainSession(broker_offer=2, gsp_ask=10, broker_limit=6, gsp_reserve=5,
                                     broker_step=1, gsp_step=2))
for rnd, offer, ask in s.history:
    print(f"  round {rnd}: offer {offer}  ask {ask}")
print(f"  -> {s.state.value} at {s.agreed_rate}")

print("\nTender for 10 jobs: three providers bid")
t = Tender("t1", "broker", DealTemplate("broker", {}, 10, 300, expiration=5), announced_at=0)
for gsp, rate in (("anl", 7), ("monash", 2), ("isi", 8)):
    t.submit_bid(gsp, rate, 1)
award_tender(t, collect_bids(t, 5), 5)
print(f"  awarded to {t.contract.gsp} at {t.contract.rate} G$/CPU-s")

print("\nProportional sharing of one CPU by bid")
for user, share in proportional_shares({"u1": 2, "u2": 4, "u3": 6}).shares.items():
    print(f"  {user}: {share}")
