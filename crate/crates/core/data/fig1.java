public void closeIdleConnections(long timeMillis) {
    long expireTime = 0;
    if (timeMillis > 0) {
        expireTime = System.currentTimeMillis() - timeMillis;
    } else {
        expireTime = System.currentTimeMillis();
    }
    for (Iterator iter = connections.iterator(); iter.hasNext(); ) {
        Connection conn = iter.next();
        if (conn.getLastUsed() <= expireTime) {
            if (log.isDebugEnabled()) {
                log.debug("Closing connection, last used: " + conn.getLastUsed());
            }
            iter.remove();
            conn.close();
        }
    }
}
